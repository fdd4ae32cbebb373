"""Energy functions, the linear annealing path between them, and exact
ground-truth samplers used for evaluation.

All energies are vectorized: ``value`` maps (N, d) -> (N,), ``grad``
maps (N, d) -> (N, d).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp


@dataclass(frozen=True)
class Energy:
    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]

    def value_one(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=float)[None, :])[0])

    def grad_one(self, x) -> np.ndarray:
        return self.grad(np.asarray(x, dtype=float)[None, :])[0]


@dataclass(frozen=True)
class EnergyPath:
    """Linear interpolation f_t = t f1 + (1 - t) f0 between a latent and
    a target energy."""

    f0: Energy
    f1: Energy

    def __post_init__(self):
        if self.f0.dim != self.f1.dim:
            raise ValueError("latent and target dimensions differ")

    @property
    def dim(self) -> int:
        return self.f0.dim

    def eval_batch(self, t: float, x: np.ndarray):
        """Returns (f_t, time derivative of f_t, gradient of f_t).

        The time derivative along the linear path is f1 - f0 for all t.
        """
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"path time {t} outside [0, 1]")
        v0, v1 = self.f0.value(x), self.f1.value(x)
        g0, g1 = self.f0.grad(x), self.f1.grad(x)
        return (t * v1 + (1.0 - t) * v0,
                v1 - v0,
                t * g1 + (1.0 - t) * g0)

    def energy_at(self, t: float) -> Energy:
        """The interpolated energy f_t as a standalone Energy."""
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"path time {t} outside [0, 1]")
        f0, f1 = self.f0, self.f1

        def value(x, t=t):
            return t * f1.value(x) + (1.0 - t) * f0.value(x)

        def grad(x, t=t):
            return t * f1.grad(x) + (1.0 - t) * f0.grad(x)

        return Energy(dim=self.dim, value=value, grad=grad)


def path_eval(path: EnergyPath, t: float, x) -> tuple[float, float, np.ndarray]:
    """Scalar-point version of ``EnergyPath.eval_batch``."""
    xb = np.asarray(x, dtype=float)[None, :]
    ft, dtf, gf = path.eval_batch(t, xb)
    return float(ft[0]), float(dtf[0]), gf[0]


def gaussian_energy(mean, stddev: float) -> Energy:
    """Isotropic Gaussian energy |x - mean|^2 / (2 stddev^2)."""
    if stddev <= 0:
        raise ValueError("stddev must be positive")
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    inv_var = 1.0 / stddev**2

    def value(x):
        diff = x - mean
        return 0.5 * inv_var * np.sum(diff * diff, axis=-1)

    def grad(x):
        return inv_var * (x - mean)

    return Energy(dim=mean.size, value=value, grad=grad)


def gaussian_mixture_energy(means, variance: float, weights=None) -> Energy:
    """Negative log-density of an isotropic Gaussian mixture."""
    means = np.atleast_2d(np.asarray(means, dtype=float))
    n_comp, dim = means.shape
    if n_comp == 0:
        raise ValueError("empty mixture")
    if variance <= 0:
        raise ValueError("variance must be positive")
    if weights is None:
        weights = np.full(n_comp, 1.0 / n_comp)
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (n_comp,):
        raise ValueError("weights/means length mismatch")
    log_w = np.log(weights / np.sum(weights))
    log_norm = -0.5 * dim * np.log(2.0 * np.pi * variance)

    def component_logs(x):
        diff = x[..., None, :] - means  # (N, J, d)
        sq = np.sum(diff * diff, axis=-1)
        return log_w + log_norm - 0.5 * sq / variance, diff

    def value(x):
        logs, _ = component_logs(x)
        return -logsumexp(logs, axis=-1)

    def grad(x):
        logs, diff = component_logs(x)
        # responsibilities via stabilized softmax
        logs = logs - np.max(logs, axis=-1, keepdims=True)
        resp = np.exp(logs)
        resp /= np.sum(resp, axis=-1, keepdims=True)
        return np.sum(resp[..., None] * diff, axis=-2) / variance

    return Energy(dim=dim, value=value, grad=grad)


def many_well_energy(m: int, d: int) -> Energy:
    """m double-well pairs on the first 2m coordinates, standard
    Gaussian on the rest.

    Pair i (1-based) occupies coordinates (2i-1, 2i): a quartic
    x^4 - 6x^2 - x/2 on the odd coordinate and x^2/2 on the even one.
    """
    if 2 * m > d:
        raise ValueError(f"2m = {2 * m} exceeds dimension {d}")
    quartic = np.arange(0, 2 * m, 2)  # 0-based odd-pair coordinates

    def value(x):
        xq = x[..., quartic]
        well = np.sum(xq**4 - 6.0 * xq**2 - 0.5 * xq, axis=-1)
        rest = np.delete(np.arange(d), quartic)
        gauss = 0.5 * np.sum(x[..., rest] ** 2, axis=-1)
        return well + gauss

    def grad(x):
        g = x.copy()
        xq = x[..., quartic]
        g[..., quartic] = 4.0 * xq**3 - 12.0 * xq - 0.5
        return g

    return Energy(dim=d, value=value, grad=grad)


# ---------------------------------------------------------------------------
# Ground-truth samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruthSampler:
    dim: int
    draw: Callable[[int, np.random.Generator], np.ndarray]


def gaussian_mixture_sampler(means, variance: float,
                             weights=None) -> GroundTruthSampler:
    means = np.atleast_2d(np.asarray(means, dtype=float))
    n_comp, dim = means.shape
    if weights is None:
        weights = np.full(n_comp, 1.0 / n_comp)
    weights = np.asarray(weights, dtype=float) / np.sum(weights)
    std = np.sqrt(variance)

    def draw(count: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(n_comp, size=count, p=weights)
        return means[comp] + std * rng.standard_normal((count, dim))

    return GroundTruthSampler(dim=dim, draw=draw)


def _quartic_unnorm_logpdf(x: np.ndarray) -> np.ndarray:
    return -(x**4 - 6.0 * x**2 - 0.5 * x)


_QUARTIC_GRID = np.linspace(-4.0, 4.0, 10_000)


def quartic_grid_density() -> tuple[np.ndarray, np.ndarray]:
    """Grid and normalized density of the 1-d double-well marginal
    exp(-(x^4 - 6x^2 - x/2)); the test oracle for the rejection sampler."""
    g = _QUARTIC_GRID
    logp = _quartic_unnorm_logpdf(g)
    p = np.exp(logp - np.max(logp))
    p /= np.trapezoid(p, g)
    return g, p


def sample_quartic_marginal(count: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection sampling of the 1-d double-well marginal against a
    two-mode Gaussian-mixture envelope."""
    g, p = quartic_grid_density()
    # envelope: one Gaussian per well, centered at the grid modes
    half = len(g) // 2
    m_lo = g[:half][np.argmax(p[:half])]
    m_hi = g[half:][np.argmax(p[half:])]
    env_means = np.array([m_lo, m_hi])
    env_std = 0.35
    env = (np.exp(-0.5 * ((g[:, None] - env_means) / env_std) ** 2)
           / (env_std * np.sqrt(2 * np.pi))).mean(axis=1)
    bound = 1.05 * np.max(p / env)

    log_shift = np.max(_quartic_unnorm_logpdf(g))
    norm = np.trapezoid(np.exp(_quartic_unnorm_logpdf(g) - log_shift), g)

    out = np.empty(count)
    filled = 0
    while filled < count:
        todo = count - filled
        comp = rng.integers(0, 2, size=2 * todo)
        prop = env_means[comp] + env_std * rng.standard_normal(2 * todo)
        q_prop = (np.exp(-0.5 * ((prop[:, None] - env_means) / env_std) ** 2)
                  / (env_std * np.sqrt(2 * np.pi))).mean(axis=1)
        p_prop = np.exp(_quartic_unnorm_logpdf(prop) - log_shift) / norm
        accept = rng.random(2 * todo) < p_prop / (bound * q_prop)
        kept = prop[accept][:todo]
        out[filled:filled + kept.size] = kept
        filled += kept.size
    return out


def many_well_ground_truth(m: int, d: int) -> GroundTruthSampler:
    """Exact sampler for the many-well target via its per-coordinate
    factorization."""
    if 2 * m > d:
        raise ValueError(f"2m = {2 * m} exceeds dimension {d}")

    def draw(count: int, rng: np.random.Generator) -> np.ndarray:
        x = rng.standard_normal((count, d))
        for i in range(m):
            x[:, 2 * i] = sample_quartic_marginal(count, rng)
        return x

    return GroundTruthSampler(dim=d, draw=draw)


# ---------------------------------------------------------------------------
# Named target registry (CLI/config surface)
# ---------------------------------------------------------------------------

def gm40_means() -> np.ndarray:
    """The 40 mixture means for the 40-mode target, frozen as package
    data so the target is reproducible."""
    path = importlib.resources.files("ttflow").joinpath("data/gm40_means.csv")
    return np.loadtxt(str(path), delimiter=",")


def make_target(name: str, *, manywell_m: int = 2, manywell_d: int = 6,
                latent_stddev: float | None = None):
    """Build (path, ground-truth sampler, default domain box) for one of
    the named targets: gm2 | gm40 | manywell."""
    if name == "gm2":
        means = np.array([[2.0, 2.0], [-2.0, -2.0]])
        var = 0.01
        f1 = gaussian_mixture_energy(means, var)
        f0 = gaussian_energy(np.zeros(2), latent_stddev or 1.0)
        return (EnergyPath(f0, f1), gaussian_mixture_sampler(means, var),
                (-5.0, 5.0))
    if name == "gm40":
        means = gm40_means()
        var = 1.0
        f1 = gaussian_mixture_energy(means, var)
        f0 = gaussian_energy(np.zeros(2), latent_stddev or 500.0)
        return (EnergyPath(f0, f1), gaussian_mixture_sampler(means, var),
                (-50.0, 50.0))
    if name == "manywell":
        m, d = manywell_m, manywell_d
        f1 = many_well_energy(m, d)
        f0 = gaussian_energy(np.zeros(d), latent_stddev or 1.0)
        return (EnergyPath(f0, f1), many_well_ground_truth(m, d),
                (-5.0, 5.0))
    raise ValueError(f"unknown target {name!r}")
