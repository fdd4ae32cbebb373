"""Sample-quality metrics: the energy distance V-statistic and repeated
draw-and-compare evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUBSAMPLE_CAP = 50_000
_BLOCK = 512


def _mean_pairwise_norm(x: np.ndarray, y: np.ndarray) -> float:
    """Mean Euclidean distance over all pairs, accumulated in fixed row
    blocks for a deterministic summation order."""
    total = 0.0
    for start in range(0, x.shape[0], _BLOCK):
        xb = x[start:start + _BLOCK]
        diff = xb[:, None, :] - y[None, :, :]
        total += float(np.sqrt(np.sum(diff * diff, axis=-1)).sum())
    return total / (x.shape[0] * y.shape[0])


def _maybe_subsample(x: np.ndarray, cap: int, seed: int) -> np.ndarray:
    if x.shape[0] <= cap:
        return x
    idx = np.random.default_rng(seed).choice(x.shape[0], size=cap,
                                             replace=False)
    return x[idx]


def energy_distance(x: np.ndarray, y: np.ndarray,
                    subsample_cap: int = SUBSAMPLE_CAP,
                    subsample_seed: int = 0) -> float:
    """Szekely energy distance between two point sets (V-statistic,
    diagonal included): 2 E|X-Y| - E|X-X'| - E|Y-Y'|.

    Exactly zero on identical sets.  Sets larger than ``subsample_cap``
    are subsampled with a seeded draw.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise ValueError("need at least two points per set")
    if x.shape[1] != y.shape[1]:
        raise ValueError("dimension mismatch between sample sets")
    x = _maybe_subsample(x, subsample_cap, subsample_seed)
    y = _maybe_subsample(y, subsample_cap, subsample_seed + 1)
    return (2.0 * _mean_pairwise_norm(x, y)
            - _mean_pairwise_norm(x, x)
            - _mean_pairwise_norm(y, y))


@dataclass(frozen=True)
class MetricReport:
    energy_distance_mean: float
    energy_distance_std: float
    means: np.ndarray
    variances: np.ndarray
    sample_count: int
    draws: int


def repeated_eval(draw_model, draw_truth, draws: int,
                  samples_per_draw: int, seed: int) -> tuple[float, float]:
    """Repeat sample-and-compare with independent seeds.

    ``draw_model(count, rng)`` and ``draw_truth(count, rng)`` produce the
    two sample sets; returns (mean, sample std) of the energy distance
    over ``draws`` repetitions.
    """
    if draws < 2:
        raise ValueError("need at least two draws")
    streams = np.random.SeedSequence(seed).spawn(draws)
    values = []
    for ss in streams:
        rng = np.random.default_rng(ss)
        xs = draw_model(samples_per_draw, rng)
        ys = draw_truth(samples_per_draw, rng)
        values.append(energy_distance(xs, ys))
    values = np.asarray(values)
    return float(values.mean()), float(values.std(ddof=1))


def moment_report(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension means and variances."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    return x.mean(axis=0), x.var(axis=0)
