"""Rejection ABC baseline."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .layers import PriorSpec
from .simulators.base import SimulatorSpec, derive_seed, dump_csv


class NoAcceptances(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RejectionConfig:
    """Top-q quantile rule unless ``epsilon`` is given."""

    proposals: int = 10_000
    quantile: float = 0.01
    epsilon: float | None = None
    standardize: bool = True
    dataset_size: int | None = None

    def __post_init__(self):
        if self.proposals < 1:
            raise ValueError(f"proposals must be >= 1, got {self.proposals}")
        if self.epsilon is None:
            if not 0.0 < self.quantile <= 1.0:
                raise ValueError(f"quantile must lie in (0, 1], got {self.quantile}")
        elif not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")

    @property
    def rule(self) -> str:
        return "quantile" if self.epsilon is None else "epsilon"


@dataclass
class RejectionResult:
    samples: np.ndarray        # accepted theta, in proposal order
    accepted: np.ndarray       # proposal indices
    distances: np.ndarray      # all proposals
    proposals: np.ndarray
    scale: np.ndarray

    @property
    def acceptance_rate(self) -> float:
        return len(self.accepted) / len(self.proposals)

    def to_csv(self, path) -> Path:
        return dump_csv(self.samples, path)


def mad_scale(S: np.ndarray) -> np.ndarray:
    """Per-column median absolute deviation; zero columns get scale 1."""
    mad = np.median(np.abs(S - np.median(S, axis=0)), axis=0)
    return np.where(mad > 0, mad, 1.0)


def accept_indices(distances: np.ndarray, cfg: RejectionConfig) -> np.ndarray:
    if cfg.epsilon is not None:
        return np.flatnonzero(distances <= cfg.epsilon)
    k = math.ceil(cfg.quantile * len(distances))
    # stable sort keeps the lower proposal index first among ties
    keep = np.argsort(distances, kind="stable")[:k]
    return np.sort(keep)


def rejection_abc(prior: PriorSpec, simulator: SimulatorSpec | Callable,
                  summary: Callable, observed, cfg: RejectionConfig = RejectionConfig(),
                  seed: int = 0) -> RejectionResult:
    """Draw theta from the prior, simulate, keep the closest summaries.

    ``observed`` is the full observed dataset; each proposal simulates a
    dataset of the same length unless ``cfg.dataset_size`` says otherwise.
    """
    s_obs = np.atleast_1d(np.asarray(summary(observed), float))
    size = cfg.dataset_size if cfg.dataset_size is not None else len(observed)
    rng = np.random.default_rng(derive_seed(seed, 0))
    thetas = prior.sample(rng, cfg.proposals)
    S = np.empty((cfg.proposals, s_obs.size))
    for i, theta in enumerate(thetas):
        S[i] = np.atleast_1d(summary(simulator(theta, derive_seed(seed, 1, i), size)))
    scale = mad_scale(S) if cfg.standardize else np.ones(s_obs.size)
    dist = np.sqrt((((S - s_obs) / scale) ** 2).sum(axis=1))
    idx = accept_indices(dist, cfg)
    if idx.size == 0:
        warnings.warn(f"no proposal within epsilon={cfg.epsilon}", NoAcceptances, stacklevel=2)
    return RejectionResult(thetas[idx], idx, dist, thetas, scale)
