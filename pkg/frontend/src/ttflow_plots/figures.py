"""Scatter and corner figures from sample CSV exports.

Reads the ``x1,...,xd`` CSV files written by the sampler CLI and renders
method-vs-ground-truth comparisons.  Output is deterministic: fixed
style, no timestamps in the image metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

METHOD_COLOR = "tab:blue"
TRUTH_COLOR = "tab:orange"

# strip wall-clock metadata so identical inputs give identical bytes
SAVE_KWARGS = {"metadata": {"Software": None, "CreationDate": None}}


@dataclass(frozen=True)
class PlotSpec:
    method_csv: str
    truth_csv: str
    out_png: str
    bins: int = 50
    limits: Optional[tuple[float, float]] = None
    dims: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        if self.bins < 1:
            raise ValueError("bins must be positive")


def load_samples(path: str) -> np.ndarray:
    """Load an x1..xd CSV; validates the header convention."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        expected = [f"x{i + 1}" for i in range(len(header))]
        if header != expected:
            raise ValueError(
                f"{path}: expected columns {expected}, got {header}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] == 0:
        raise ValueError(f"{path}: no sample rows")
    return data


def _common_limits(method: np.ndarray, truth: np.ndarray,
                   limits: Optional[tuple[float, float]]):
    if limits is not None:
        return limits
    lo = min(method.min(), truth.min())
    hi = max(method.max(), truth.max())
    pad = 0.05 * (hi - lo or 1.0)
    return lo - pad, hi + pad


def scatter_compare(method_csv: str, truth_csv: str, out_png: str,
                    limits: Optional[tuple[float, float]] = None) -> str:
    """Side-by-side 2-d scatter of method samples and ground truth with
    shared fixed axis limits."""
    method = load_samples(method_csv)
    truth = load_samples(truth_csv)
    if method.shape[1] != 2 or truth.shape[1] != 2:
        raise ValueError("scatter_compare expects 2-d samples")
    lo, hi = _common_limits(method, truth, limits)

    fig, axes = plt.subplots(1, 2, figsize=(9, 4.5), sharex=True,
                             sharey=True)
    for ax, data, color, title in (
            (axes[0], method, METHOD_COLOR, "method"),
            (axes[1], truth, TRUTH_COLOR, "ground truth")):
        ax.scatter(data[:, 0], data[:, 1], s=4, alpha=0.5, color=color,
                   linewidths=0)
        ax.set_xlim(lo, hi)
        ax.set_ylim(lo, hi)
        ax.set_title(title)
        ax.set_aspect("equal")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120, **SAVE_KWARGS)
    plt.close(fig)
    return out_png


def corner_plot(method_csv: str, truth_csv: str,
                dims: Optional[Sequence[int]], out_png: str,
                bins: int = 50,
                limits: Optional[tuple[float, float]] = None) -> str:
    """Corner grid: 1-d marginal histograms on the diagonal, 2-d
    histograms of the method samples on the lower triangle, with the
    ground truth overlaid in a second color on the diagonal."""
    method = load_samples(method_csv)
    truth = load_samples(truth_csv)
    if method.shape[1] != truth.shape[1]:
        raise ValueError("method and truth CSVs disagree on dimension")
    if dims is None:
        dims = tuple(range(method.shape[1]))
    dims = tuple(dims)
    for k in dims:
        if not 0 <= k < method.shape[1]:
            raise ValueError(f"dimension {k} out of range")
    lo, hi = _common_limits(method[:, dims], truth[:, dims], limits)
    edges = np.linspace(lo, hi, bins + 1)
    n = len(dims)

    fig, axes = plt.subplots(n, n, figsize=(2.2 * n, 2.2 * n),
                             squeeze=False)
    for i in range(n):
        for j in range(n):
            ax = axes[i][j]
            if j > i:
                ax.set_axis_off()
                continue
            if i == j:
                ax.hist(method[:, dims[i]], bins=edges, density=True,
                        color=METHOD_COLOR, alpha=0.6)
                ax.hist(truth[:, dims[i]], bins=edges, density=True,
                        color=TRUTH_COLOR, alpha=0.6,
                        histtype="step", linewidth=1.5)
                ax.set_xlim(lo, hi)
            else:
                ax.hist2d(method[:, dims[j]], method[:, dims[i]],
                          bins=[edges, edges], cmap="Blues")
                ax.set_xlim(lo, hi)
                ax.set_ylim(lo, hi)
            if i < n - 1:
                ax.set_xticklabels([])
            if j > 0:
                ax.set_yticklabels([])
            if i == n - 1:
                ax.set_xlabel(f"x{dims[j] + 1}")
            if j == 0:
                ax.set_ylabel(f"x{dims[i] + 1}")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120, **SAVE_KWARGS)
    plt.close(fig)
    return out_png


def render(spec: PlotSpec, kind: str) -> str:
    if kind == "scatter":
        return scatter_compare(spec.method_csv, spec.truth_csv,
                               spec.out_png, limits=spec.limits)
    if kind == "corner":
        return corner_plot(spec.method_csv, spec.truth_csv, spec.dims,
                           spec.out_png, bins=spec.bins,
                           limits=spec.limits)
    raise ValueError(f"unknown plot kind {kind!r}")
