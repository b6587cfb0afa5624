"""Hand-engineered summaries of binary carriage matrices."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .base import SeedLike, rng_from


def numminen_features(M: np.ndarray) -> np.ndarray:
    """(strain diversity, strains present, infected fraction, multi-strain fraction)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    per_strain = M.sum(axis=0)
    total = per_strain.sum()
    if total > 0:
        p = per_strain / total
        diversity = 1.0 - float(p @ p)
    else:
        diversity = 0.0
    per_person = M.sum(axis=1)
    return np.array([
        diversity,
        float(np.count_nonzero(per_strain)),
        float(np.count_nonzero(per_person >= 1)) / n,
        float(np.count_nonzero(per_person >= 2)) / n,
    ])


def dcc_features_numminen(matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Four features per center; shape (centers, 4)."""
    return np.stack([numminen_features(M) for M in matrices])


def _ones_fraction_stats(M: np.ndarray) -> tuple[float, float, float]:
    rows = M.mean(axis=1)
    cols = M.mean(axis=0)
    return float(M.mean()), float(rows.std()), float(cols.std())


def gutmann_features(M: np.ndarray) -> np.ndarray:
    """(L2 norm of singular values, numerical rank, ones fraction, row variability, column variability)."""
    M = np.asarray(M, dtype=float)
    sv = np.linalg.svd(M, compute_uv=False)
    tol = sv.max(initial=0.0) * max(M.shape) * np.finfo(float).eps
    mean, row_sd, col_sd = _ones_fraction_stats(M)
    return np.array([float(np.sqrt(sv @ sv)), float(np.count_nonzero(sv > tol)),
                     mean, row_sd, col_sd])


def _submatrix_features(M: np.ndarray, rng: np.random.Generator,
                        fraction: float) -> np.ndarray:
    n, s = M.shape
    side = np.sqrt(fraction)
    r = max(1, int(round(side * n)))
    c = max(1, int(round(side * s)))
    rows = rng.choice(n, size=r, replace=False)
    cols = rng.choice(s, size=c, replace=False)
    sub = M[np.ix_(rows, cols)]
    return np.array([float(sub.mean()), float(sub.mean(axis=1).std())])


def dcc_features_gutmann(matrices: Sequence[np.ndarray], randomized: bool = False,
                         subsets: int = 1000, seed: SeedLike = 0,
                         fraction: float = 0.1) -> np.ndarray:
    """Five features per matrix, or ``subsets`` rows of seven when randomized.

    The randomized variant picks a center and a random submatrix holding
    about ``fraction`` of its entries for each subset, appending the
    submatrix ones fraction and row variability to that center's five
    features.
    """
    base = np.stack([gutmann_features(M) for M in matrices])
    if not randomized:
        return base
    rng = rng_from(seed)
    out = np.empty((subsets, 7))
    for k in range(subsets):
        c = int(rng.integers(len(matrices)))
        M = np.asarray(matrices[c], dtype=float)
        out[k, :5] = base[c]
        out[k, 5:] = _submatrix_features(M, rng, fraction)
    return out
