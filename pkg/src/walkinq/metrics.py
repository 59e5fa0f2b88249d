"""Social-cost components: scheduled waits, walk-in wait, server idle time.

The walk-in wait and the idle time follow from the solved state
trajectory (E_w and the integral of P_0).  The scheduled customers' waits
do not: they depend on who exactly is ahead (a service in progress, an
earlier appointment holder), which the scalar queue-length state does not
carry.  Those are estimated by discrete-event simulation of whole days
under the solved arrival distribution, which doubles as an independent
cross-check of the numerical solver.

Simulation determinism: all randomness for one run derives from four
numbered child streams of the seed (counts, arrival uniforms, walk-in
services, scheduled services), each consumed in replication order, so a
given (seed, replication index) always sees the same draws regardless of
how many replications follow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numba import njit

from .equilibrium import EquilibriumResult
from .model import ModelParams, WalkinqError
from .verify import replay
from .waiting import Schedule

_BIG = 1e300


class SimulationInputError(WalkinqError):
    """The equilibrium handed to the simulator is unusable."""


@dataclass(frozen=True)
class SimulationConfig:
    replications: int = 100_000
    seed: int = 20240
    batch_size: int = 0  # 0 = auto: 50 batches

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")

    def batches(self) -> int:
        if self.batch_size > 0:
            return max(1, self.replications // self.batch_size)
        return min(50, self.replications)


@dataclass
class CostBreakdown:
    """Cost components of one schedule under its equilibrium arrivals."""

    phi_s: float  # total expected wait of scheduled customers
    per_customer: tuple[float, ...]  # W_m, m = 1..M
    e_w: float  # walk-in equilibrium wait
    e_i: float  # expected idle time on [0, T]
    lam: float
    ci_halfwidths: dict[str, float] = field(default_factory=dict)
    diagnostics: dict[str, Any] = field(default_factory=dict)


def social_cost(breakdown: CostBreakdown, gamma: float) -> float:
    """gamma*(Phi_s + lam*E_w) + (1-gamma)*E_I."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    return gamma * (breakdown.phi_s + breakdown.lam * breakdown.e_w) + (
        1.0 - gamma
    ) * breakdown.e_i


def idle_time_numeric(
    result: EquilibriumResult,
    params: ModelParams | None = None,
    refine: int = 16,
) -> float:
    """Trapezoid of P_0(t) over [0, T] along the replayed trajectory.

    The state at t=0 already includes the atom crowd (and an appointment
    holder scheduled at 0), so the first trapezoid node is the post-jump
    empty-probability.  The replay subdivides each solver step (``refine``)
    because the Euler bias of P_0 at the solver's own step is comparable
    to the Monte-Carlo resolution this integral is validated against.
    """
    _, _, traj = replay(result, result.schedule, params or result.params, refine=refine)
    return traj.idle_integral


def inverse_cdf_nodes(result: EquilibriumResult) -> tuple[np.ndarray, np.ndarray]:
    """Strictly informative (F, t) nodes for inverse-cdf sampling.

    Keeps the first point plus the start and end of every cdf increase,
    so flat stretches (gaps) never receive interpolated mass.
    """
    f = result.cdf
    keep = np.zeros(len(f), dtype=bool)
    keep[0] = True
    rising = np.diff(f) > 0
    keep[1:][rising] = True  # ends of increases
    keep[:-1][rising] = True  # starts of increases
    return f[keep], result.times[keep]


def sample_arrival_times(
    result: EquilibriumResult, u: np.ndarray
) -> np.ndarray:
    """Map uniforms through the inverse of the solved cdf.

    The atom at 0 maps u <= p_e to exactly 0.0; within a cdf increase the
    inverse interpolates linearly; u beyond the terminal cdf value lands
    at the closing time.
    """
    f_nodes, t_nodes = inverse_cdf_nodes(result)
    idx = np.searchsorted(f_nodes, u, side="left")
    idx = np.clip(idx, 0, len(f_nodes) - 1)
    lo = np.maximum(idx - 1, 0)
    f0, f1 = f_nodes[lo], f_nodes[idx]
    t0, t1 = t_nodes[lo], t_nodes[idx]
    span = f1 - f0
    frac = np.where(span > 0, (u - f0) / np.where(span > 0, span, 1.0), 1.0)
    out = t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0)
    out[idx == 0] = t_nodes[0]
    out[u >= f_nodes[-1]] = t_nodes[-1]
    return out


@njit(cache=True)
def _run_days(
    walk_t,
    walk_offs,
    walk_srv,
    sched_t,
    sched_srv,
    horizon,
    wait_sum,
    sched_wait,
    idle,
    busy,
    overtime,
):
    n_reps = walk_offs.shape[0] - 1
    n_sched = sched_t.shape[0]
    for r in range(n_reps):
        a, b = walk_offs[r], walk_offs[r + 1]
        # stable insertion sort: simultaneous (atom) arrivals keep draw order
        for i in range(a + 1, b):
            key = walk_t[i]
            srv = walk_srv[i]
            j = i - 1
            while j >= a and walk_t[j] > key:
                walk_t[j + 1] = walk_t[j]
                walk_srv[j + 1] = walk_srv[j]
                j -= 1
            walk_t[j + 1] = key
            walk_srv[j + 1] = srv
        iw = a
        isch = 0
        t_free = 0.0
        tot_idle = 0.0
        tot_busy = 0.0
        wsum = 0.0
        while iw < b or isch < n_sched:
            next_sched = sched_t[isch] if isch < n_sched else _BIG
            next_walk = walk_t[iw] if iw < b else _BIG
            if next_sched <= t_free:  # appointments overtake waiting walk-ins
                start = t_free
                dur = sched_srv[r * n_sched + isch]
                sched_wait[r * n_sched + isch] = start - next_sched
                isch += 1
            elif next_walk <= t_free:
                start = t_free
                dur = walk_srv[iw]
                wsum += start - next_walk
                iw += 1
            else:
                nxt = next_sched if next_sched < next_walk else next_walk
                hi = nxt if nxt < horizon else horizon
                if hi > t_free:
                    tot_idle += hi - t_free
                t_free = nxt
                continue
            end = start + dur
            hi = end if end < horizon else horizon
            if hi > start:
                tot_busy += hi - start
            t_free = end
        if t_free < horizon:
            tot_idle += horizon - t_free
        wait_sum[r] = wsum
        idle[r] = tot_idle
        busy[r] = tot_busy
        overtime[r] = t_free - horizon if t_free > horizon else 0.0


@dataclass
class DayStats:
    """Raw per-replication simulation outputs."""

    walk_wait_sum: np.ndarray
    walk_count: np.ndarray
    sched_wait: np.ndarray  # (reps, M)
    idle: np.ndarray
    busy: np.ndarray
    overtime: np.ndarray


def simulate_days(
    result: EquilibriumResult,
    schedule: Schedule,
    params: ModelParams,
    config: SimulationConfig,
) -> DayStats:
    """Simulate whole days under the solved arrival distribution.

    Walk-ins: a Poisson(lam) population, each arrival drawn from the
    solved cdf (atom mass at 0, early times when t0 < 0).  Appointments
    arrive exactly on schedule and overtake every waiting walk-in but
    never a service in progress; walk-ins are served in arrival order.
    """
    if abs(result.cdf_terminal - 1.0) > 0.05:
        raise SimulationInputError(
            f"equilibrium cdf terminates at {result.cdf_terminal:.4f}, not ~1"
        )
    reps = config.replications
    counts = np.random.default_rng([config.seed, 0]).poisson(params.lam, reps)
    offs = np.zeros(reps + 1, dtype=np.int64)
    np.cumsum(counts, out=offs[1:])
    total = int(offs[-1])
    u = np.random.default_rng([config.seed, 1]).random(total)
    walk_t = sample_arrival_times(result, u)
    walk_srv = np.random.default_rng([config.seed, 2]).exponential(
        1.0 / params.mu, total
    )
    m = schedule.m
    sched_srv = np.random.default_rng([config.seed, 3]).exponential(
        1.0 / params.mu, reps * m
    )
    sched_t = np.asarray(schedule.times, dtype=float)

    wait_sum = np.zeros(reps)
    sched_wait = np.zeros(reps * m)
    idle = np.zeros(reps)
    busy = np.zeros(reps)
    overtime = np.zeros(reps)
    _run_days(
        walk_t,
        offs,
        walk_srv,
        sched_t,
        sched_srv,
        params.horizon,
        wait_sum,
        sched_wait,
        idle,
        busy,
        overtime,
    )
    return DayStats(
        walk_wait_sum=wait_sum,
        walk_count=counts.astype(np.int64),
        sched_wait=sched_wait.reshape(reps, m),
        idle=idle,
        busy=busy,
        overtime=overtime,
    )


def _batch_ci(values: np.ndarray, n_batches: int) -> float:
    """95% half-width from contiguous batch means."""
    usable = (len(values) // n_batches) * n_batches
    if usable == 0 or n_batches < 2:
        return float("inf")
    batches = values[:usable].reshape(n_batches, -1).mean(axis=1)
    return 1.96 * float(np.std(batches, ddof=1)) / np.sqrt(n_batches)


def _ratio_batch_ci(num: np.ndarray, den: np.ndarray, n_batches: int) -> float:
    usable = (len(num) // n_batches) * n_batches
    if usable == 0 or n_batches < 2:
        return float("inf")
    ns = num[:usable].reshape(n_batches, -1).sum(axis=1)
    ds = den[:usable].reshape(n_batches, -1).sum(axis=1)
    ratios = ns / np.where(ds > 0, ds, 1)
    return 1.96 * float(np.std(ratios, ddof=1)) / np.sqrt(n_batches)


def simulate(
    result: EquilibriumResult,
    schedule: Schedule | None = None,
    params: ModelParams | None = None,
    config: SimulationConfig | None = None,
) -> CostBreakdown:
    """Monte-Carlo cost estimates with batch-means confidence intervals.

    Every field is simulation-based here; :func:`evaluate_costs` swaps in
    the (exact) numerical walk-in wait and idle time when composing
    objective values for sweeps and the optimiser.
    """
    schedule = schedule or result.schedule
    params = params or result.params
    config = config or SimulationConfig()
    stats = simulate_days(result, schedule, params, config)
    nb = config.batches()
    n_tot = int(stats.walk_count.sum())
    e_w = float(stats.walk_wait_sum.sum() / n_tot) if n_tot else 0.0
    w_m = tuple(float(x) for x in stats.sched_wait.mean(axis=0))
    ci = {
        "e_w": _ratio_batch_ci(
            stats.walk_wait_sum, stats.walk_count.astype(float), nb
        ),
        "e_i": _batch_ci(stats.idle, nb),
        "phi_s": _batch_ci(stats.sched_wait.sum(axis=1), nb) if schedule.m else 0.0,
    }
    return CostBreakdown(
        phi_s=float(sum(w_m)),
        per_customer=w_m,
        e_w=e_w,
        e_i=float(stats.idle.mean()),
        lam=params.lam,
        ci_halfwidths=ci,
        diagnostics={
            "replications": config.replications,
            "seed": config.seed,
            "overtime_mean": float(stats.overtime.mean()),
            "walkins_mean": float(stats.walk_count.mean()),
        },
    )


def evaluate_costs(
    result: EquilibriumResult,
    schedule: Schedule | None = None,
    params: ModelParams | None = None,
    config: SimulationConfig | None = None,
) -> CostBreakdown:
    """Hybrid cost breakdown: numeric E_w and E_I, simulated Phi_s.

    The scheduled waits have no scalar-state expression, so they come
    from the simulator; the walk-in wait and idle time use the solver's
    own (noise-free) values.
    """
    schedule = schedule or result.schedule
    params = params or result.params
    sim = simulate(result, schedule, params, config)
    e_i = idle_time_numeric(result, params)
    return CostBreakdown(
        phi_s=sim.phi_s,
        per_customer=sim.per_customer,
        e_w=result.e_w,
        e_i=e_i,
        lam=params.lam,
        ci_halfwidths={"phi_s": sim.ci_halfwidths["phi_s"], "e_w": 0.0, "e_i": 0.0},
        diagnostics={
            **sim.diagnostics,
            "e_w_sim": sim.e_w,
            "e_i_sim": sim.e_i,
            "e_w_sim_ci": sim.ci_halfwidths["e_w"],
            "e_i_sim_ci": sim.ci_halfwidths["e_i"],
        },
    )
