"""Stochastic Ricker map observed through Poisson counts."""
from __future__ import annotations

import numpy as np

from .base import SeedLike, SimulatorError, rng_from


def ricker_latent(theta, seed: SeedLike, T: int, n0: float = 1.0, burn_in: int = 0):
    """Latent population N^(1..T) and the generator used to draw it."""
    log_r, sigma, phi = (float(v) for v in theta)
    if sigma < 0 or phi < 0:
        raise ValueError(f"sigma and phi must be non-negative, got {sigma}, {phi}")
    if T < 1:
        raise ValueError("T must be at least 1")
    rng = rng_from(seed)
    steps = T + burn_in
    noise = sigma * rng.standard_normal(steps)
    N = np.empty(steps)
    n = n0
    with np.errstate(over="raise"):
        try:
            for t in range(steps):
                n = n * np.exp(log_r - n + noise[t])
                N[t] = n
        except FloatingPointError:
            raise SimulatorError("Ricker population overflowed", theta) from None
    return N[burn_in:], rng


def sim_ricker(theta, seed: SeedLike, T: int = 10, n0: float = 1.0,
               burn_in: int = 0) -> np.ndarray:
    """Counts y^(t) ~ Poisson(phi N^(t)) for t = 1..T; theta = (log r, sigma, phi)."""
    N, rng = ricker_latent(theta, seed, T, n0, burn_in)
    phi = float(theta[2])
    return rng.poisson(phi * N)
