"""Multi-strain carriage dynamics in day care centers.

Each attendee carries any subset of ``S`` strains.  An attendee lacking
strain ``s`` acquires it at rate

    (outside_rate * P_s + within_rate * E_s) * (coinfection if carrying else 1)

where ``E_s`` is the fraction of the other attendees carrying ``s``.  Every
carried strain clears at rate 1, which fixes the time unit.  The process is
simulated exactly (Gillespie) up to the sampling horizon.
"""
from __future__ import annotations

from typing import Sequence

import numba
import numpy as np

from .base import SeedLike

N_CENTERS = 29
N_STRAINS = 33
N_ATTENDEES = 53
HORIZON = 10.0


@numba.njit(cache=True)
def _gillespie_center(n: int, S: int, lam: float, beta: float, theta_co: float,
                      P: np.ndarray, horizon: float, seed: int) -> np.ndarray:
    np.random.seed(seed)
    state = np.zeros((n, S), dtype=np.uint8)
    counts = np.zeros(S)
    carried = np.zeros(n)
    rates = np.zeros((n, S))
    other = 1.0 / (n - 1) if n > 1 else 0.0
    t = 0.0
    while True:
        total = 0.0
        for s in range(S):
            base = lam * P[s] + beta * counts[s] * other
            for i in range(n):
                if state[i, s]:
                    r = 1.0
                else:
                    r = base * (theta_co if carried[i] > 0 else 1.0)
                rates[i, s] = r
                total += r
        if total <= 0.0:
            break
        t += np.random.exponential(1.0 / total)
        if t > horizon:
            break
        target = np.random.random() * total
        acc = 0.0
        pick_i = n - 1
        pick_s = S - 1
        done = False
        for i in range(n):
            for s in range(S):
                acc += rates[i, s]
                if acc >= target and rates[i, s] > 0.0:
                    pick_i = i
                    pick_s = s
                    done = True
                    break
            if done:
                break
        if state[pick_i, pick_s]:
            state[pick_i, pick_s] = 0
            counts[pick_s] -= 1.0
            carried[pick_i] -= 1.0
        else:
            state[pick_i, pick_s] = 1
            counts[pick_s] += 1.0
            carried[pick_i] += 1.0
    return state


def _seed32(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def sim_dcc(theta, seed: SeedLike, n_centers: int = N_CENTERS,
            attendees: int | Sequence[int] = N_ATTENDEES, n_strains: int = N_STRAINS,
            horizon: float = HORIZON, strain_probs: np.ndarray | None = None,
            sampled_fraction: float = 1.0) -> list[np.ndarray]:
    """Binary attendee x strain carriage matrices at the sampling time, one per center.

    ``theta = (outside rate, within-center rate, co-infection factor)``.
    """
    lam, beta, theta_co = (float(v) for v in theta)
    if lam < 0 or beta < 0 or theta_co < 0:
        raise ValueError(f"DCC rates must be non-negative, got {theta}")
    if not 0 < sampled_fraction <= 1:
        raise ValueError("sampled_fraction must lie in (0, 1]")
    sizes = [int(attendees)] * n_centers if np.isscalar(attendees) else [int(a) for a in attendees]
    if len(sizes) != n_centers:
        raise ValueError("need one attendee count per center")
    P = np.full(n_strains, 1.0 / n_strains) if strain_probs is None else np.asarray(strain_probs, float)
    if P.shape != (n_strains,) or np.any(P < 0) or not np.isclose(P.sum(), 1.0):
        raise ValueError("strain_probs must be a probability vector over the strains")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(n_centers + 1)
    sub_rng = np.random.default_rng(children[-1])
    out = []
    for k, n in enumerate(sizes):
        M = _gillespie_center(n, n_strains, lam, beta, theta_co, P, float(horizon),
                              _seed32(children[k]))
        if sampled_fraction < 1.0:
            keep = max(1, int(round(sampled_fraction * n)))
            rows = np.sort(sub_rng.choice(n, size=keep, replace=False))
            M = M[rows]
        out.append(M)
    return out
