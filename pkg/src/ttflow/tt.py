"""Tensor trains with an output leg on the first core.

Core ``k`` has shape ``(r_{k-1}, n_k, r_k)``; ``r_0`` is the output
dimension of the represented (vector-valued) coefficient tensor and
``r_d = 1``.  All operations are pure and return new values; instances
are treated as immutable after construction.
"""

from __future__ import annotations

import numpy as np


class TensorTrain:
    def __init__(self, cores: list[np.ndarray]):
        cores = [np.asarray(c, dtype=float) for c in cores]
        if not cores:
            raise ValueError("empty core list")
        for k, core in enumerate(cores):
            if core.ndim != 3:
                raise ValueError(f"core {k} is not 3-way")
            if not np.all(np.isfinite(core)):
                raise ValueError(f"core {k} has non-finite entries")
        for k in range(len(cores) - 1):
            if cores[k].shape[2] != cores[k + 1].shape[0]:
                raise ValueError(
                    f"rank mismatch between cores {k} and {k + 1}: "
                    f"{cores[k].shape[2]} vs {cores[k + 1].shape[0]}")
        if cores[-1].shape[2] != 1:
            raise ValueError("last core must have right rank 1")
        self.cores = cores

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def output_dim(self) -> int:
        return self.cores[0].shape[0]

    @property
    def mode_sizes(self) -> tuple[int, ...]:
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self) -> tuple[int, ...]:
        """Internal ranks (r_1, ..., r_{d-1})."""
        return tuple(c.shape[2] for c in self.cores[:-1])

    def __repr__(self) -> str:
        return (f"TensorTrain(order={self.order}, modes={self.mode_sizes}, "
                f"ranks={self.ranks}, output_dim={self.output_dim})")

    def evaluate(self, feature_vectors: list[np.ndarray]) -> np.ndarray:
        """Contract each core with its feature vector and chain-multiply.

        Returns the length-``output_dim`` result vector.
        """
        if len(feature_vectors) != self.order:
            raise ValueError("need one feature vector per core")
        result = None
        for k, (core, feat) in enumerate(zip(self.cores, feature_vectors)):
            feat = np.asarray(feat, dtype=float)
            if feat.shape != (core.shape[1],):
                raise ValueError(
                    f"feature vector {k} has length {feat.shape}, "
                    f"core mode size is {core.shape[1]}")
            mat = np.einsum("anb,n->ab", core, feat)
            result = mat if result is None else result @ mat
        return result[:, 0]

    def dense(self) -> np.ndarray:
        """Materialize the full coefficient tensor, shape
        (output_dim, n_1, ..., n_d).  Small instances only."""
        out = self.cores[0]  # (d_out, n_1, r_1)
        for core in self.cores[1:]:
            out = np.tensordot(out, core, axes=(-1, 0))
        return out[..., 0]

    def scale(self, c: float) -> "TensorTrain":
        cores = [core.copy() for core in self.cores]
        cores[0] = cores[0] * c
        return TensorTrain(cores)

    def add(self, other: "TensorTrain") -> "TensorTrain":
        """Block-diagonal sum; internal ranks add elementwise."""
        if (self.mode_sizes != other.mode_sizes
                or self.output_dim != other.output_dim):
            raise ValueError("incompatible shapes for TT addition")
        d = self.order
        if d == 1:
            return TensorTrain([self.cores[0] + other.cores[0]])
        cores: list[np.ndarray] = []
        cores.append(np.concatenate([self.cores[0], other.cores[0]], axis=2))
        for k in range(1, d - 1):
            a, b = self.cores[k], other.cores[k]
            ra0, n, ra1 = a.shape
            rb0, _, rb1 = b.shape
            block = np.zeros((ra0 + rb0, n, ra1 + rb1))
            block[:ra0, :, :ra1] = a
            block[ra0:, :, ra1:] = b
            cores.append(block)
        cores.append(np.concatenate([self.cores[-1], other.cores[-1]], axis=0))
        return TensorTrain(cores)

    def orthogonalize(self, direction: str = "left") -> "TensorTrain":
        """QR-sweep leaving all but the terminal core orthogonal
        matricizations; evaluation is unchanged."""
        if direction == "left":
            return TensorTrain(_left_orthogonalize([c.copy() for c in self.cores]))
        if direction == "right":
            return TensorTrain(_right_orthogonalize([c.copy() for c in self.cores]))
        raise ValueError(f"unknown direction {direction!r}")

    def fro_norm(self) -> float:
        """Frobenius norm of the represented coefficient tensor."""
        cores = _left_orthogonalize([c.copy() for c in self.cores])
        return float(np.linalg.norm(cores[-1]))

    def round(self, rel_tolerance: float, max_rank: int) -> "TensorTrain":
        """TT-SVD recompression: left-orthogonalize, then truncate
        singular values right-to-left with per-edge threshold
        ``rel_tolerance * |a|_F / sqrt(d - 1)`` and cap ``max_rank``."""
        tt, _ = round_with_error(self, rel_tolerance, max_rank)
        return tt


def round_with_error(a: TensorTrain, rel_tolerance: float,
                     max_rank: int) -> tuple[TensorTrain, float]:
    """As ``TensorTrain.round`` but also returns sqrt(sum of discarded
    squared singular values) across the truncation sweep."""
    if rel_tolerance < 0:
        raise ValueError("rel_tolerance must be >= 0")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    if a.order == 1:
        return TensorTrain([c.copy() for c in a.cores]), 0.0
    cores = _left_orthogonalize([c.copy() for c in a.cores])
    norm = np.linalg.norm(cores[-1])
    threshold = rel_tolerance * norm / np.sqrt(a.order - 1)
    discarded_sq = 0.0
    for k in range(a.order - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        u, s, vt = np.linalg.svd(cores[k].reshape(r0, n * r1),
                                 full_matrices=False)
        keep = len(s)
        while keep > 1 and np.sqrt(np.sum(s[keep - 1:] ** 2)) <= threshold:
            keep -= 1
        keep = min(keep, max_rank)
        discarded_sq += float(np.sum(s[keep:] ** 2))
        cores[k] = vt[:keep].reshape(keep, n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], u[:, :keep] * s[:keep],
                                    axes=(2, 0))
    return TensorTrain(cores), float(np.sqrt(discarded_sq))


def _left_orthogonalize(cores: list[np.ndarray]) -> list[np.ndarray]:
    for k in range(len(cores) - 1):
        r0, n, r1 = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(r0 * n, r1))
        cores[k] = q.reshape(r0, n, q.shape[1])
        cores[k + 1] = np.tensordot(r, cores[k + 1], axes=(1, 0))
    return cores


def _right_orthogonalize(cores: list[np.ndarray]) -> list[np.ndarray]:
    for k in range(len(cores) - 1, 0, -1):
        r0, n, r1 = cores[k].shape
        q, r = np.linalg.qr(cores[k].reshape(r0, n * r1).T)
        cores[k] = q.T.reshape(q.shape[1], n, r1)
        cores[k - 1] = np.tensordot(cores[k - 1], r.T, axes=(2, 0))
    return cores


def zero_tt(mode_sizes: tuple[int, ...], output_dim: int) -> TensorTrain:
    """Rank-1 all-zero TT."""
    cores = [np.zeros((output_dim, mode_sizes[0], 1))]
    for n in mode_sizes[1:]:
        cores.append(np.zeros((1, n, 1)))
    return TensorTrain(cores)


def random_tt(mode_sizes: tuple[int, ...], ranks: tuple[int, ...],
              output_dim: int, rng: np.random.Generator,
              scale: float = 1.0) -> TensorTrain:
    """TT with i.i.d. normal core entries of the given scale."""
    d = len(mode_sizes)
    if len(ranks) != d - 1:
        raise ValueError("need d - 1 internal ranks")
    bonds = [output_dim, *ranks, 1]
    cores = [scale * rng.standard_normal((bonds[k], mode_sizes[k], bonds[k + 1]))
             for k in range(d)]
    return TensorTrain(cores)
