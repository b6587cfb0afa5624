"""Posterior evaluation: histogram KL, L1 mean error, summary report."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

SMOOTH_EPS = 1e-9


class MetricError(ValueError):
    pass


@dataclass
class KLResult:
    kl: float
    n_in_range: int
    n_dropped: int

    def __float__(self):
        return self.kl


def kl_histogram(true_pdf: Callable, samples, range: tuple[float, float] = (-10.0, 10.0),
                 bins: int = 100, symmetrize: bool = False, eps: float = SMOOTH_EPS) -> KLResult:
    """D_KL(p || q) between a known density and a sample histogram.

    p is the density at each bin midpoint times the bin width, renormalized;
    q is the in-range sample histogram with ``eps`` added to every bin and
    renormalized.  ``symmetrize`` appends the negated samples first, for
    samplers that only return one half of a symmetric posterior.
    """
    x = np.asarray(samples, float).ravel()
    if symmetrize:
        x = np.concatenate([x, -x])
    lo, hi = range
    inside = (x >= lo) & (x <= hi)
    n_in = int(inside.sum())
    if n_in == 0:
        raise MetricError(f"no samples inside [{lo}, {hi}]")
    edges = np.linspace(lo, hi, bins + 1)
    mids = 0.5 * (edges[:-1] + edges[1:])
    p = np.asarray(true_pdf(mids), float) * np.diff(edges)
    if not p.sum() > 0:
        raise MetricError("true density has no mass on the bins")
    p = p / p.sum()
    q = np.histogram(x[inside], bins=edges)[0] / n_in + eps
    q = q / q.sum()
    nz = p > 0
    kl = float(np.sum(p[nz] * np.log(p[nz] / q[nz])))
    return KLResult(kl, n_in, int(x.size - n_in))


def l1_mean_error(estimate, truth) -> float:
    est, tru = np.asarray(estimate, float).ravel(), np.asarray(truth, float).ravel()
    if est.shape != tru.shape:
        raise MetricError(f"dimension mismatch: {est.shape} vs {tru.shape}")
    return float(np.abs(est - tru).sum())


def l1_trajectory(thetas: np.ndarray, truth) -> np.ndarray:
    """l1_mean_error of the per-iteration batch mean; thetas is T×m×d."""
    means = np.asarray(thetas, float).mean(axis=1)
    return np.abs(means - np.asarray(truth, float)).sum(axis=1)


@dataclass
class PosteriorReport:
    mean: np.ndarray
    std: np.ndarray
    counts: np.ndarray   # d × bins
    edges: np.ndarray    # d × (bins + 1)

    def as_dict(self, names=None) -> dict:
        names = names or [f"theta{i + 1}" for i in range(len(self.mean))]
        return {n: {"mean": float(m), "std": float(s)} for n, m, s in zip(names, self.mean, self.std)}


def posterior_report(samples, lo, hi, bins: int = 50) -> PosteriorReport:
    """Per-dimension mean, population std and histogram over the prior box."""
    X = np.asarray(samples, float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) < 2:
        raise MetricError(f"need at least two samples, got {len(X)}")
    lo, hi = np.broadcast_to(lo, X.shape[1]), np.broadcast_to(hi, X.shape[1])
    edges = np.stack([np.linspace(a, b, bins + 1) for a, b in zip(lo, hi)])
    # clip so that boundary samples land in the end bins and counts sum to n
    counts = np.stack([np.histogram(np.clip(X[:, j], lo[j], hi[j]), bins=edges[j])[0]
                       for j in range(X.shape[1])])
    return PosteriorReport(X.mean(0), X.std(0), counts, edges)


def box_mass(samples, lo, hi, point, parts: int = 3) -> np.ndarray:
    """Fraction of samples in the 1/parts slice of the box holding ``point``, per dim."""
    X = np.atleast_2d(np.asarray(samples, float))
    lo, hi, point = (np.asarray(v, float) for v in (lo, hi, point))
    width = (hi - lo) / parts
    cell = np.clip(np.floor((point - lo) / width), 0, parts - 1)
    a, b = lo + cell * width, lo + (cell + 1) * width
    return ((X >= a) & (X <= b)).mean(axis=0)
