"""Functional tensor-train vector fields: a TT of basis coefficients
contracted with a univariate basis per coordinate, with analytic
divergence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ttflow.basis import BasisSet
from ttflow.tt import TensorTrain


def contract_core(core: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Contract a (r0, n, r1) core with per-sample feature rows (N, n),
    giving per-sample matrices (N, r0, r1)."""
    return np.einsum("anb,Nn->Nab", core, feats, optimize=True)


@dataclass(frozen=True)
class FttVectorField:
    tt: TensorTrain
    basis: BasisSet
    domain: tuple[float, float]  # box [a, b]^d, one interval per axis

    def __post_init__(self):
        if any(n != self.basis.size for n in self.tt.mode_sizes):
            raise ValueError("TT mode sizes must equal basis size")
        if self.tt.output_dim != self.tt.order:
            raise ValueError("vector field needs output_dim == spatial dim")

    @property
    def dim(self) -> int:
        return self.tt.order

    def features(self, x: np.ndarray):
        """Per-coordinate basis values and derivatives for points (N, d);
        each entry of the returned lists has shape (N, n)."""
        phis, dphis = [], []
        for k in range(self.dim):
            v, dv = self.basis.eval_features_batch(x[:, k])
            phis.append(v)
            dphis.append(dv)
        return phis, dphis

    def eval_batch(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Field values (N, d) and divergences (N,) in one chain pass
        with cached prefix/suffix interface products."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ValueError(f"points must be (N, {self.dim})")
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite evaluation point")
        phis, dphis = self.features(x)
        d = self.dim
        mats = [contract_core(self.tt.cores[k], phis[k]) for k in range(d)]
        dmats = [contract_core(self.tt.cores[k], dphis[k]) for k in range(d)]

        prefixes = [mats[0]]  # prefixes[k] = G_0 ... G_k
        for k in range(1, d):
            prefixes.append(prefixes[-1] @ mats[k])
        suffixes = [None] * d  # suffixes[k] = G_k ... G_{d-1}
        suffixes[d - 1] = mats[d - 1]
        for k in range(d - 2, -1, -1):
            suffixes[k] = mats[k] @ suffixes[k + 1]

        values = prefixes[d - 1][:, :, 0]
        div = np.zeros(x.shape[0])
        for k in range(d):
            term = dmats[k] if k == 0 else prefixes[k - 1] @ dmats[k]
            if k < d - 1:
                term = term @ suffixes[k + 1]
            div += term[:, k, 0]
        return values, div

    def count_outside(self, x: np.ndarray) -> int:
        """Points falling outside the domain box (they are still
        evaluable via the periodic basis extension)."""
        a, b = self.domain
        return int(np.sum(np.any((x < a) | (x > b), axis=1)))


def field_eval(field: FttVectorField, x) -> tuple[np.ndarray, float]:
    """Single-point field value and divergence."""
    xb = np.asarray(x, dtype=float)[None, :]
    v, div = field.eval_batch(xb)
    return v[0], float(div[0])
