"""Stochastic-step toolbox: particle transport under a frozen velocity
field with continuous log-density tracking, unadjusted Langevin
mutation, and importance resampling."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ttflow.field import FttVectorField
from ttflow.targets import Energy


@dataclass(frozen=True)
class ParticleEnsemble:
    """N particles with per-particle log-density of the current
    proposal, tracked up to one shared additive constant."""

    points: np.ndarray       # (N, d)
    log_density: np.ndarray  # (N,)
    num_frozen: int = 0      # particles frozen after leaving the safety box

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a nonempty (N, d) array")
        if self.log_density.shape != (self.points.shape[0],):
            raise ValueError("log_density length mismatch")

    @property
    def size(self) -> int:
        return self.points.shape[0]


def ode_solve(ensemble: ParticleEnsemble, field: FttVectorField,
              t0: float, t1: float, substeps: int,
              safety_factor: float = 10.0) -> ParticleEnsemble:
    """Advance particles by RK4 under the frozen field and accumulate
    the instantaneous change of variables: log-density decreases by the
    divergence integrated along each trajectory with the same RK4
    stages.

    Trajectories leaving the safety box (the domain box scaled by
    ``safety_factor`` about its center) are frozen at their last valid
    state and counted in ``num_frozen``.
    """
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    if substeps < 1:
        raise ValueError("need at least one substep")
    a, b = field.domain
    center, half = 0.5 * (a + b), 0.5 * (b - a)
    lo, hi = center - safety_factor * half, center + safety_factor * half

    x = ensemble.points.copy()
    logq = ensemble.log_density.copy()
    h = (t1 - t0) / substeps
    frozen = np.zeros(ensemble.size, dtype=bool)

    for _ in range(substeps):
        v1, d1 = field.eval_batch(x)
        v2, d2 = field.eval_batch(x + 0.5 * h * v1)
        v3, d3 = field.eval_batch(x + 0.5 * h * v2)
        v4, d4 = field.eval_batch(x + h * v3)
        x_new = x + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
        logq_new = logq - (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
        escape = np.any((x_new < lo) | (x_new > hi), axis=1) | ~np.isfinite(
            x_new).all(axis=1)
        frozen |= escape
        keep = ~frozen
        x[keep] = x_new[keep]
        logq[keep] = logq_new[keep]

    return ParticleEnsemble(points=x, log_density=logq,
                            num_frozen=ensemble.num_frozen + int(frozen.sum()))


def langevin_step(ensemble: ParticleEnsemble, energy: Energy, h: float,
                  steps: int, rng: np.random.Generator) -> ParticleEnsemble:
    """Unadjusted Langevin updates x - h grad f(x) + sqrt(2h) noise,
    applied ``steps`` times.  The tracked log-density is deliberately
    not updated; only the flow layers define the proposal density."""
    if h <= 0:
        raise ValueError("step size must be positive")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    x = ensemble.points.copy()
    scale = np.sqrt(2.0 * h)
    for step in range(steps):
        g = energy.grad(x)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(
                f"non-finite energy gradient in Langevin step {step}")
        x = x - h * g + scale * rng.standard_normal(x.shape)
    return replace(ensemble, points=x)


def resampling_step(ensemble: ParticleEnsemble,
                    target_log_density: Callable[[np.ndarray], np.ndarray],
                    rng: np.random.Generator,
                    scheme: str = "multinomial",
                    ess_floor: float = 1.0) -> tuple[ParticleEnsemble, float]:
    """Importance resampling against an unnormalized target.

    Log-weights are target minus tracked proposal log-density; N indices
    are redrawn proportionally to the weights.  Returns the new ensemble
    and the effective sample size.  When ESS/N exceeds ``ess_floor`` the
    ensemble is returned unchanged (the default 1.0 always resamples).
    """
    n = ensemble.size
    target_logp = np.asarray(target_log_density(ensemble.points), dtype=float)
    log_w = target_logp - ensemble.log_density
    finite = np.isfinite(log_w)
    if not finite.any():
        raise FloatingPointError("all resampling weights are zero or NaN")
    w = np.zeros(n)
    w[finite] = np.exp(log_w[finite] - np.max(log_w[finite]))
    total = w.sum()
    if total <= 0 or not np.isfinite(total):
        raise FloatingPointError("all resampling weights are zero or NaN")
    ess = float(total**2 / np.sum(w**2))
    if ess / n > ess_floor:
        return ensemble, ess
    p = w / total
    if scheme == "multinomial":
        idx = rng.choice(n, size=n, p=p)
    elif scheme == "systematic":
        positions = (rng.random() + np.arange(n)) / n
        idx = np.searchsorted(np.cumsum(p), positions)
        idx = np.clip(idx, 0, n - 1)
    else:
        raise ValueError(f"unknown resampling scheme {scheme!r}")
    new = ParticleEnsemble(points=ensemble.points[idx],
                           log_density=target_logp[idx],
                           num_frozen=ensemble.num_frozen)
    return new, ess
