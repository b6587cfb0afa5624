"""Gaussian-kernel maximum mean discrepancy."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from . import autodiff as ad
from .autodiff import ShapeError, Var


class DegenerateBandwidthWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel; ``bandwidth=None`` selects the median heuristic per call."""

    bandwidth: float | None = None

    def __post_init__(self):
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def resolve(self, X: np.ndarray, Y: np.ndarray) -> float:
        if self.bandwidth is not None:
            return float(self.bandwidth)
        return median_heuristic(np.concatenate([X, Y], axis=0))


def gaussian_kernel(x, y, bw: float) -> float:
    """exp(-||x - y||^2 / (2 bw^2))."""
    if not bw > 0:
        raise ValueError(f"bandwidth must be positive, got {bw}")
    diff = np.atleast_1d(np.asarray(x, float) - np.asarray(y, float))
    return float(np.exp(-diff @ diff / (2.0 * bw * bw)))


def median_heuristic(Z: np.ndarray) -> float:
    """Median pairwise Euclidean distance of the pooled rows of Z.

    Falls back to 1.0 (with a warning) when every pairwise distance is zero.
    """
    Z = np.asarray(Z, float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if len(Z) < 2:
        raise ValueError("median heuristic needs at least two points")
    dists = pdist(Z)
    bw = float(np.median(dists))
    if not bw > 0:
        positive = dists[dists > 0]
        if positive.size == 0:
            warnings.warn("all pooled points coincide; using bandwidth 1.0",
                          DegenerateBandwidthWarning, stacklevel=2)
            return 1.0
        # More than half the pairs coincide; the smallest usable scale is the
        # median of the nonzero distances.
        bw = float(np.median(positive))
    return bw


def _gram_sum(X: Var, Y: Var, inv2bw2: float, offset: np.ndarray | None = None) -> Var:
    logk = ad.scale(ad.sqdist(X, Y), -inv2bw2)
    if offset is not None:
        logk = ad.add(logk, offset)
    return ad.sum(ad.exp(logk))


def mmd_unbiased(X, Y, kernel: KernelSpec | float | None = None,
                 context: np.ndarray | None = None) -> Var:
    """Unbiased MMD^2 estimate between the rows of X (m×d) and Y (n×d).

    Differentiable with respect to whichever of X, Y is on the tape.  The
    bandwidth is resolved from detached values and never differentiated.

    ``context`` (m×c, requires m == n) pairs row i of X and of Y with a
    shared covariate and multiplies the kernel by a Gaussian kernel on the
    covariates (median-heuristic bandwidth), which compares the conditional
    distributions given the covariate instead of the marginals.  Paired rows
    are dependent, so the cross term then also skips i == j.
    """
    X, Y = ad.as_var(X), ad.as_var(Y)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ShapeError("mmd_unbiased", X.shape, Y.shape)
    m, n = X.shape[0], Y.shape[0]
    if m < 2 or n < 2:
        raise ValueError(f"mmd_unbiased needs at least two samples per side, got m={m}, n={n}")
    if context is not None and (n != m or len(context) != m):
        raise ShapeError("mmd_unbiased (context needs paired rows)", X.shape, Y.shape, np.shape(context))
    if not isinstance(kernel, KernelSpec):
        kernel = KernelSpec(kernel)
    bw = kernel.resolve(X.value, Y.value)
    c = 1.0 / (2.0 * bw * bw)
    offset = None
    if context is not None:
        context = np.asarray(context, float).reshape(m, -1)
        cbw = median_heuristic(context)
        offset = -ad.sqdist(context, context).value / (2.0 * cbw * cbw)
    # Self-similarity diagonals are exactly exp(0) = 1 and carry no gradient.
    kxx = ad.scale(ad.add(_gram_sum(X, X, c, offset), -float(m)), 1.0 / (m * (m - 1)))
    kyy = ad.scale(ad.add(_gram_sum(Y, Y, c, offset), -float(n)), 1.0 / (n * (n - 1)))
    if context is None:
        kxy = ad.scale(_gram_sum(X, Y, c, offset), -2.0 / (m * n))
    else:
        np.fill_diagonal(offset, -np.inf)
        kxy = ad.scale(_gram_sum(X, Y, c, offset), -2.0 / (m * (m - 1)))
    return ad.add(ad.add(kxx, kyy), kxy)
