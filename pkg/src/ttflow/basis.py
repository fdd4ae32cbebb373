"""Univariate Fourier systems orthonormalized in the H^2 Sobolev inner
product, with value and first-derivative evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIZE_CAP = 64


@dataclass(frozen=True)
class BasisSet:
    """An orthonormalized univariate function system on an interval.

    The raw system is the full-period Fourier family
    ``{1, cos(w_k u), sin(w_k u)}`` with ``w_k = 2 pi k / (b - a)`` and
    ``u = x - a``; ``transform`` maps raw values to the orthonormalized
    functions (``phi = transform @ psi``).
    """

    interval: tuple[float, float]
    size: int
    kind: str
    transform: np.ndarray  # (n, n), lower triangular

    @property
    def width(self) -> float:
        return self.interval[1] - self.interval[0]

    def eval_features(self, x: float) -> tuple[np.ndarray, np.ndarray]:
        """Values and first derivatives of all basis functions at ``x``.

        Points outside the interval are handled by the periodic
        extension natural to the Fourier family.
        """
        vals, ders = self.eval_features_batch(np.asarray([x], dtype=float))
        return vals[0], ders[0]

    def eval_features_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``eval_features``; returns arrays of shape (m, n)."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite evaluation point")
        raw_v, raw_d = _raw_features(x, self.interval, self.size)
        return raw_v @ self.transform.T, raw_d @ self.transform.T


def _frequencies(interval: tuple[float, float], n: int) -> np.ndarray:
    """Angular frequency of each raw function; 0 for the constant."""
    length = interval[1] - interval[0]
    freqs = np.zeros(n)
    for i in range(1, n):
        k = (i + 1) // 2  # pair index: cos_1, sin_1, cos_2, ...
        freqs[i] = 2.0 * np.pi * k / length
    return freqs


def _raw_features(x: np.ndarray, interval: tuple[float, float], n: int):
    u = x[:, None] - interval[0]
    w = _frequencies(interval, n)[None, :]
    vals = np.empty((x.size, n))
    ders = np.empty((x.size, n))
    vals[:, 0] = 1.0
    ders[:, 0] = 0.0
    cos_idx = np.arange(1, n, 2)
    sin_idx = np.arange(2, n, 2)
    vals[:, cos_idx] = np.cos(w[:, cos_idx] * u)
    ders[:, cos_idx] = -w[:, cos_idx] * np.sin(w[:, cos_idx] * u)
    vals[:, sin_idx] = np.sin(w[:, sin_idx] * u)
    ders[:, sin_idx] = w[:, sin_idx] * np.cos(w[:, sin_idx] * u)
    return vals, ders


def _h2_gram(interval: tuple[float, float], n: int) -> np.ndarray:
    """Closed-form Gram matrix of the raw system under
    int (f g + f' g' + f'' g'') dx over one full period.

    Full-period sines/cosines of distinct frequencies are orthogonal in
    all three terms, so the Gram is diagonal.
    """
    length = interval[1] - interval[0]
    w = _frequencies(interval, n)
    diag = np.where(
        w == 0.0,
        length,
        0.5 * length * (1.0 + w**2 + w**4),
    )
    return np.diag(diag)


def make_fourier_h2(interval: tuple[float, float], n: int,
                    size_cap: int = DEFAULT_SIZE_CAP) -> BasisSet:
    """Build the H^2-orthonormalized Fourier system of size ``n`` on
    ``interval``.

    Raises ``ValueError`` for ``n`` above ``size_cap`` or a degenerate
    interval.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ValueError(f"degenerate interval [{a}, {b}]")
    if n < 1:
        raise ValueError("basis size must be >= 1")
    if n > size_cap:
        raise ValueError(f"basis size {n} exceeds cap {size_cap}")
    gram = _h2_gram((a, b), n)
    chol = np.linalg.cholesky(gram)
    # phi = R psi with R = chol^{-1} gives R G R^T = I.
    transform = np.linalg.solve(chol, np.eye(n))
    return BasisSet(interval=(a, b), size=n, kind="fourier-h2",
                    transform=transform)
