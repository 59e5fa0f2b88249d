"""Shared fixtures: the reference instances and a tagged-customer oracle."""

from __future__ import annotations

import numpy as np
import pytest

from walkinq import ModelParams, Schedule, solve

HORIZON = 5.0
MU = 1.0

# (schedule text, lambda) -> published atom mass
REFERENCE_ATOMS = {
    ("1,3,5", 2): 0.790,
    ("1,3,5", 4): 0.815,
    ("4,4.5,5", 2): 0.827,
    ("4,4.5,5", 4): 0.983,
    ("0,2,5", 2): 0.128,
    ("0,2,5", 4): 0.550,
    ("0,0.5,0.8", 2): 0.0,
    ("0,0.5,0.8", 4): 0.151,
    ("0,4.5,5", 2): 0.163,
    ("0,4.5,5", 4): 0.714,
}

EARLY_INSTANCES = [("0,2,5", 2), ("0,2,5", 4), ("1,3,5", 2), ("1,3,5", 4),
                   ("0,4.5,5", 2), ("0,4.5,5", 4)]


def frame(lam: float, delta: float = 0.01) -> ModelParams:
    return ModelParams(lam=lam, mu=MU, horizon=HORIZON, delta=delta)


@pytest.fixture(scope="session")
def solved_instances():
    """All reference instances solved once at the standard frame."""
    out = {}
    for (text, lam) in REFERENCE_ATOMS:
        sched = Schedule.parse(text, HORIZON)
        out[(text, lam)] = solve(sched, frame(lam))
    return out


@pytest.fixture(scope="session")
def solved_early():
    out = {}
    for (text, lam) in EARLY_INSTANCES:
        sched = Schedule.parse(text, HORIZON)
        out[(text, lam)] = solve(sched, frame(lam), early=True)
    return out


def tagged_wait_mc(
    t_arr: float,
    n_ahead,
    sched_times,
    mu: float,
    reps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Waits of a tagged walk-in with ``n_ahead`` in front at time ``t_arr``.

    The server is busy until everyone ahead is served; each later
    appointment holder who arrives before the tagged service starts slots
    in ahead of her.  Independent of the recursion under test: it just
    accumulates exponential services and counts overtakes.
    """
    n_ahead = np.asarray(n_ahead, dtype=np.int64)
    if n_ahead.ndim == 0:
        n_ahead = np.full(reps, int(n_ahead), dtype=np.int64)
    future = [s for s in sched_times if s > t_arr + 1e-12]
    max_services = int(n_ahead.max()) + len(future)
    if max_services == 0:
        return np.zeros(reps)
    cum = t_arr + np.cumsum(rng.exponential(1.0 / mu, (reps, max_services)), axis=1)
    rows = np.arange(reps)
    need = n_ahead.copy()
    start = np.where(need > 0, cum[rows, np.maximum(need, 1) - 1], t_arr)
    for s in future:
        overtaken = (need > 0) & (s < start)
        need = need + overtaken
        start = np.where(need > 0, cum[rows, need - 1], t_arr)
    return start - t_arr
