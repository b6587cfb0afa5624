"""Black-box simulator interface and seed plumbing."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from ..layers import PriorSpec

SeedLike = int | Sequence[int] | np.random.SeedSequence


class SimulatorError(RuntimeError):
    """A simulator call failed; ``theta`` is the offending parameter row."""

    def __init__(self, message: str, theta=None, row: int | None = None):
        self.theta = None if theta is None else np.asarray(theta)
        self.row = row
        where = "" if row is None else f" (row {row})"
        if theta is not None:
            where += f" at theta={np.array2string(self.theta, precision=6)}"
        super().__init__(message + where)


def derive_seed(*keys: int) -> np.random.SeedSequence:
    """Deterministic child seed for e.g. (run seed, iteration, row)."""
    return np.random.SeedSequence([int(k) & 0xFFFFFFFFFFFFFFFF for k in keys])


def rng_from(seed: SeedLike) -> np.random.Generator:
    return np.random.default_rng(seed)


@dataclass
class SimulatorSpec:
    """A pure map (theta, seed, size) -> dataset, with its prior and output shape."""

    name: str
    dim: int
    prior: PriorSpec
    fn: Callable[..., Any]
    output_shape: tuple = ()
    size: int | None = None
    options: dict = field(default_factory=dict)

    def __call__(self, theta, seed: SeedLike, size: int | None = None):
        size = self.size if size is None else size
        theta = np.asarray(theta, dtype=float)
        if size is None:
            return self.fn(theta, seed, **self.options)
        return self.fn(theta, seed, size, **self.options)

    def simulate_batch(self, thetas: np.ndarray, seeds: Sequence[SeedLike],
                       size: int | None = None) -> list:
        """One call per row; each result lands in the slot of its row."""
        out = [None] * len(thetas)
        for row, (theta, seed) in enumerate(zip(thetas, seeds)):
            try:
                out[row] = self(theta, seed, size)
            except SimulatorError as err:
                raise SimulatorError(str(err), theta, row) from err
            except (ValueError, FloatingPointError, OverflowError) as err:
                raise SimulatorError(f"{self.name} failed: {err}", theta, row) from err
        return out


def dump_csv(samples, path: str | Path) -> Path:
    """Write one row per sample (scalars become single-column rows)."""
    path = Path(path)
    arr = np.asarray(samples)
    if arr.ndim == 1:
        arr = arr[:, None]
    arr = arr.reshape(arr.shape[0], -1)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerows(arr.tolist())
    return path


def dump_matrices_csv(matrices: Sequence[np.ndarray], directory: str | Path,
                      stem: str = "center") -> list[Path]:
    """One CSV of 0/1 entries per matrix."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, M in enumerate(matrices):
        p = directory / f"{stem}_{k:02d}.csv"
        np.savetxt(p, np.asarray(M, dtype=int), fmt="%d", delimiter=",")
        paths.append(p)
    return paths
