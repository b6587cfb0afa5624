"""Linear-Gaussian model s = C theta + eps with a determinant-normalised circulant design."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .base import SeedLike, rng_from


class SingularDesign(ValueError):
    def __init__(self, n: int, det: float):
        self.n, self.det = n, det
        super().__init__(f"design matrix for n={n} is singular (det(B^T B) = {det:g})")


def glm_base_matrix(n: int) -> np.ndarray:
    """B[i, j] = (((j - i) mod n) + 1) / n: each row is the previous one rotated right."""
    if n < 2:
        raise ValueError("n must be at least 2")
    i, j = np.indices((n, n))
    return (((j - i) % n) + 1) / n


@lru_cache(maxsize=None)
def _design(n: int) -> np.ndarray:
    B = glm_base_matrix(n)
    sign, logdet = np.linalg.slogdet(B.T @ B)
    if sign <= 0 or not np.isfinite(logdet):
        raise SingularDesign(n, float(sign * np.exp(logdet)))
    C = B * np.exp(-logdet / (2 * n))
    C.setflags(write=False)
    return C


def glm_design_matrix(n: int) -> np.ndarray:
    """C = B * det(B^T B)^(-1/(2n)), so that det(C^T C) = 1."""
    return _design(int(n)).copy()


def sim_glm(theta, seed: SeedLike, size: int, noise_std: float = 1.0) -> np.ndarray:
    """``size`` draws of C theta + noise_std * N(0, I); size x n."""
    theta = np.ravel(np.asarray(theta, float))
    C = _design(theta.size)
    eps = rng_from(seed).standard_normal((size, theta.size))
    return (C @ theta)[None, :] + noise_std * eps
