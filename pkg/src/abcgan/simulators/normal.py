"""Univariate normal, two-component normal mixture and 16-d normal simulators."""
from __future__ import annotations

import numpy as np

from .base import SeedLike, rng_from


def sim_univariate_normal(theta, seed: SeedLike, size: int) -> np.ndarray:
    """``size`` i.i.d. draws from N(mu, var) with theta = (mu, var)."""
    mu, var = float(theta[0]), float(theta[1])
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    return rng_from(seed).normal(mu, np.sqrt(var), size=size)


def sim_mixture_normal(theta, seed: SeedLike, size: int, narrow_var: float = 0.01,
                       wide_var: float = 1.0, return_components: bool = False):
    """Draws from 0.5 N(theta, narrow_var) + 0.5 N(theta, wide_var)."""
    loc = float(np.ravel(theta)[0])
    rng = rng_from(seed)
    narrow = rng.random(size) < 0.5
    scale = np.where(narrow, np.sqrt(narrow_var), np.sqrt(wide_var))
    x = loc + scale * rng.standard_normal(size)
    if return_components:
        return x, narrow
    return x


def mixture_pdf(x, loc: float = 0.0, narrow_var: float = 0.01, wide_var: float = 1.0):
    x = np.asarray(x, float) - loc
    def npdf(v):
        return np.exp(-x * x / (2 * v)) / np.sqrt(2 * np.pi * v)
    return 0.5 * npdf(narrow_var) + 0.5 * npdf(wide_var)


def sim_mvn(theta, seed: SeedLike, size: int) -> np.ndarray:
    """``size`` draws from N(theta, I); returns size x len(theta)."""
    theta = np.ravel(np.asarray(theta, float))
    return theta + rng_from(seed).standard_normal((size, theta.size))
