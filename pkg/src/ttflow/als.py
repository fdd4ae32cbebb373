"""Alternating linear scheme for the empirical continuity-equation loss.

The per-sample residual is

    dt_f + <grad_f, v(x)> - div v(x) + c

with v a functional tensor-train field.  Minimizing over one TT core at
a time is a linear least-squares problem; the design matrix for core i
is assembled from cached left/right interface contractions.  The
constant c (the log-normalizer time derivative) is estimated jointly as
an unpenalized intercept column, which makes the post-fit mean residual
vanish.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from ttflow.basis import BasisSet
from ttflow.field import FttVectorField, contract_core
from ttflow.targets import EnergyPath
from ttflow.tt import TensorTrain, _left_orthogonalize, _right_orthogonalize


@dataclass(frozen=True)
class TrainingBatch:
    points: np.ndarray          # (N, d)
    dt_f: np.ndarray            # (N,)
    grad_f: np.ndarray          # (N, d)
    phis: list[np.ndarray]      # d arrays (N, n): basis values per mode
    dphis: list[np.ndarray]     # d arrays (N, n): basis derivatives

    def __post_init__(self):
        if not (np.all(np.isfinite(self.points))
                and np.all(np.isfinite(self.dt_f))
                and np.all(np.isfinite(self.grad_f))):
            raise ValueError("non-finite batch data")

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def modified_features(self, k: int) -> np.ndarray:
        """(grad_f_k) * Phi - Phi' for mode k; the feature row carrying
        the transport-minus-divergence action."""
        return self.grad_f[:, k, None] * self.phis[k] - self.dphis[k]

    @classmethod
    def from_points(cls, points: np.ndarray, path: EnergyPath, t: float,
                    basis: BasisSet) -> "TrainingBatch":
        points = np.asarray(points, dtype=float)
        _, dt_f, grad_f = path.eval_batch(t, points)
        phis, dphis = [], []
        for k in range(points.shape[1]):
            v, dv = basis.eval_features_batch(points[:, k])
            phis.append(v)
            dphis.append(dv)
        return cls(points=points, dt_f=dt_f, grad_f=grad_f,
                   phis=phis, dphis=dphis)


@dataclass(frozen=True)
class AlsConfig:
    sweeps: int = 3
    ridge: float | None = None      # absolute lambda; None -> 1e-6 * N
    tol: float = 1e-8               # relative loss-decrease stop
    estimate_ct: bool = True

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("need at least one sweep")
        if self.ridge is not None and self.ridge < 0:
            raise ValueError("ridge must be >= 0")

    def resolved_ridge(self, n_samples: int) -> float:
        return self.ridge if self.ridge is not None else 1e-6 * n_samples


def _mode_mats(cores, batch: TrainingBatch):
    """Plain and modified per-sample core contractions G_k, G^_k."""
    mats = [contract_core(cores[k], batch.phis[k]) for k in range(len(cores))]
    gmats = [contract_core(cores[k], batch.modified_features(k))
             for k in range(len(cores))]
    return mats, gmats


def _transport_term(mats, gmats) -> np.ndarray:
    """<grad_f, v> - div v per sample, via the chain with the modified
    feature substituted at one mode and the matching output component."""
    d = len(mats)
    prefixes = [mats[0]]
    for k in range(1, d):
        prefixes.append(prefixes[-1] @ mats[k])
    suffixes = [None] * d
    suffixes[d - 1] = mats[d - 1]
    for k in range(d - 2, -1, -1):
        suffixes[k] = mats[k] @ suffixes[k + 1]
    out = np.zeros(mats[0].shape[0])
    for k in range(d):
        term = gmats[k] if k == 0 else prefixes[k - 1] @ gmats[k]
        if k < d - 1:
            term = term @ suffixes[k + 1]
        out += term[:, k, 0]
    return out


def residual(field: FttVectorField, batch: TrainingBatch,
             c_t: float) -> np.ndarray:
    """Per-sample continuity-equation residual; its squared sum is the
    empirical loss."""
    mats, gmats = _mode_mats(field.tt.cores, batch)
    return batch.dt_f + _transport_term(mats, gmats) + c_t


class _Interfaces:
    """Left/right interface caches for one ALS sweep position.

    left_plain:  (N, d_out, r_{i-1})   all-plain chain, output leg open
    left_sum:    (N, r_{i-1})          sum over k < i of modified chains
                                       with output component k selected
    right_plain: (N, r_i)              all-plain suffix chain
    right_over:  (N, d_out, r_i)       row k (k > i) holds the suffix
                                       chain modified at mode k
    """

    def __init__(self, cores, batch: TrainingBatch):
        self.cores = cores
        self.batch = batch
        self.mats, self.gmats = _mode_mats(cores, batch)
        n, d_out = batch.size, cores[0].shape[0]
        eye = np.broadcast_to(np.eye(d_out), (n, d_out, d_out))
        self.left_plain = [eye.copy()]
        self.left_sum = [np.zeros((n, d_out))]
        self._build_right()

    def _build_right(self):
        d = len(self.cores)
        n, d_out = self.batch.size, self.cores[0].shape[0]
        self.right_plain = [None] * d
        self.right_over = [None] * d
        rp = np.ones((n, 1))
        ro = np.zeros((n, d_out, 1))
        self.right_plain[d - 1] = rp
        self.right_over[d - 1] = ro
        for i in range(d - 2, -1, -1):
            g, gm = self.mats[i + 1], self.gmats[i + 1]
            ro = np.einsum("Nab,Nkb->Nka", g, ro, optimize=True)
            ro[:, i + 1, :] += np.einsum("Nab,Nb->Na", gm, rp, optimize=True)
            rp = np.einsum("Nab,Nb->Na", g, rp, optimize=True)
            self.right_plain[i] = rp
            self.right_over[i] = ro

    def refresh_core(self, i: int):
        self.mats[i] = contract_core(self.cores[i], self.batch.phis[i])
        self.gmats[i] = contract_core(self.cores[i],
                                      self.batch.modified_features(i))

    def push_left(self, i: int):
        """Extend left caches past core i (call after core i is final)."""
        g, gm = self.mats[i], self.gmats[i]
        lp, ls = self.left_plain[-1], self.left_sum[-1]
        new_lp = lp @ g
        new_ls = (np.einsum("Na,Nab->Nb", ls, g, optimize=True)
                  + np.einsum("Na,Nab->Nb", lp[:, i, :], gm, optimize=True))
        self.left_plain.append(new_lp)
        self.left_sum.append(new_ls)

    def pop_left(self):
        self.left_plain.pop()
        self.left_sum.pop()

    def rebuild_right_from(self, i: int):
        """Recompute right caches for positions <= i (cores to the right
        changed)."""
        d = len(self.cores)
        if i >= d - 1:
            rp = np.ones((self.batch.size, 1))
            ro = np.zeros((self.batch.size, self.cores[0].shape[0], 1))
            self.right_plain[d - 1] = rp
            self.right_over[d - 1] = ro
            i = d - 2
        for j in range(i, -1, -1):
            g, gm = self.mats[j + 1], self.gmats[j + 1]
            ro = np.einsum("Nab,Nkb->Nka", g, self.right_over[j + 1],
                           optimize=True)
            ro[:, j + 1, :] += np.einsum("Nab,Nb->Na", gm,
                                         self.right_plain[j + 1],
                                         optimize=True)
            self.right_plain[j] = np.einsum("Nab,Nb->Na", g,
                                            self.right_plain[j + 1],
                                            optimize=True)
            self.right_over[j] = ro

    def design_matrix(self, i: int) -> np.ndarray:
        """(N, r_{i-1} * n * r_i) design of the transport-minus-
        divergence term as a linear map of core i."""
        lp = self.left_plain[i]
        ls = self.left_sum[i]
        rp = self.right_plain[i]
        ro = self.right_over[i]
        phi = self.batch.phis[i]
        gfe = self.batch.modified_features(i)
        # k < i and k > i carry the plain feature at mode i
        m_plain = (np.einsum("Na,Nb->Nab", ls, rp, optimize=True)
                   + np.einsum("Nka,Nkb->Nab", lp, ro, optimize=True))
        # k == i carries the modified feature
        m_mod = np.einsum("Na,Nb->Nab", lp[:, i, :], rp, optimize=True)
        a = (np.einsum("Nab,Nm->Namb", m_plain, phi, optimize=True)
             + np.einsum("Nab,Nm->Namb", m_mod, gfe, optimize=True))
        return a.reshape(self.batch.size, -1)


def assemble_local_system(field: FttVectorField, batch: TrainingBatch,
                          core_index: int, c_t: float = 0.0):
    """Design matrix and target for the least-squares problem in core
    ``core_index`` (interfaces computed from scratch)."""
    ifc = _Interfaces(field.tt.cores, batch)
    for j in range(core_index):
        ifc.push_left(j)
    return ifc.design_matrix(core_index), -batch.dt_f - c_t


def _solve_local(a: np.ndarray, y0: np.ndarray, lam: float,
                 estimate_ct: bool, c_fixed: float):
    """Ridge solve of |A k + c - y0|^2 + lam |k|^2; c unpenalized when
    estimated, else held at c_fixed."""
    n, p = a.shape
    if estimate_ct:
        a_aug = np.concatenate([a, np.ones((n, 1))], axis=1)
        pen = np.concatenate([np.full(p, lam), [0.0]])
    else:
        a_aug = a
        pen = np.full(p, lam)
        y0 = y0 - c_fixed
    gram = a_aug.T @ a_aug + np.diag(pen)
    rhs = a_aug.T @ y0
    try:
        sol = cho_solve(cho_factor(gram), rhs)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "singular ALS local system; set a positive ridge "
            "(als.ridge > 0)") from exc
    if estimate_ct:
        return sol[:p], float(sol[p])
    return sol, c_fixed


def als_fit(batch: TrainingBatch, basis: BasisSet, init: TensorTrain,
            config: AlsConfig,
            c_t_init: float = 0.0) -> tuple[TensorTrain, float, float]:
    """Alternating sweeps minimizing the empirical residual loss.

    Returns (fitted TT, estimated constant, final loss).  Mixed
    orthogonality is maintained so the per-core ridge penalizes the
    global coefficient norm; the regularized objective is non-increasing
    across local solves.
    """
    d = batch.dim
    if init.order != d or any(n != basis.size for n in init.mode_sizes):
        raise ValueError("init TT incompatible with batch/basis")
    lam = config.resolved_ridge(batch.size)
    cores = _right_orthogonalize([c.copy() for c in init.cores])
    ifc = _Interfaces(cores, batch)
    c_t = c_t_init
    y0 = -batch.dt_f
    prev_loss = np.inf
    loss = np.inf

    for _ in range(config.sweeps):
        # forward pass
        for i in range(d):
            shape = cores[i].shape
            a = ifc.design_matrix(i)
            vec, c_t = _solve_local(a, y0, lam, config.estimate_ct, c_t)
            cores[i] = vec.reshape(shape)
            loss = float(np.sum((a @ vec + c_t - y0) ** 2))
            if i < d - 1:
                r0, n, r1 = cores[i].shape
                q, r = np.linalg.qr(cores[i].reshape(r0 * n, r1))
                cores[i] = q.reshape(r0, n, q.shape[1])
                cores[i + 1] = np.tensordot(r, cores[i + 1], axes=(1, 0))
                ifc.refresh_core(i)
                ifc.refresh_core(i + 1)
                ifc.push_left(i)
        ifc.refresh_core(d - 1)
        ifc.rebuild_right_from(d - 1)
        # backward pass
        for i in range(d - 1, -1, -1):
            shape = cores[i].shape
            a = ifc.design_matrix(i)
            vec, c_t = _solve_local(a, y0, lam, config.estimate_ct, c_t)
            cores[i] = vec.reshape(shape)
            loss = float(np.sum((a @ vec + c_t - y0) ** 2))
            if i > 0:
                r0, n, r1 = cores[i].shape
                q, r = np.linalg.qr(cores[i].reshape(r0, n * r1).T)
                cores[i] = q.T.reshape(q.shape[1], n, r1)
                cores[i - 1] = np.tensordot(cores[i - 1], r.T, axes=(2, 0))
                ifc.refresh_core(i)
                ifc.refresh_core(i - 1)
                ifc.pop_left()
                ifc.rebuild_right_from(i - 1)
            else:
                ifc.refresh_core(0)
        if prev_loss - loss < config.tol * max(prev_loss, 1e-300):
            break
        prev_loss = loss

    return TensorTrain(cores), c_t, loss
