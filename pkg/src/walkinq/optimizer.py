"""Schedule search over the social cost: grid sweeps and differential evolution.

Every candidate schedule is evaluated the same way: solve its equilibrium
arrival distribution, then price it with the hybrid cost breakdown
(numeric walk-in wait and idle time, simulated scheduled waits).  The
simulation seed is derived from the schedule itself, so identical
schedules always price identically and re-evaluations are reproducible.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .equilibrium import SolveConfig, solve
from .metrics import CostBreakdown, SimulationConfig, evaluate_costs, social_cost
from .model import ModelParams, WalkinqError
from .waiting import Schedule

DEFAULT_GAMMAS = (0.1, 0.5, 0.9)


def schedule_seed(base_seed: int, times: Sequence[float]) -> int:
    """Deterministic per-schedule seed (stable across runs and processes)."""
    key = ",".join(f"{t:.9f}" for t in times)
    digest = hashlib.blake2b(
        f"{base_seed}|{key}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little") >> 1


def evaluate_schedule(
    times: Sequence[float],
    params: ModelParams,
    sim: SimulationConfig,
    solve_config: SolveConfig | None = None,
) -> CostBreakdown:
    """Solve + price one schedule with the schedule-derived seed."""
    sched = Schedule(times=tuple(times), horizon=params.horizon)
    result = solve(sched, params, solve_config)
    config = SimulationConfig(
        replications=sim.replications,
        seed=schedule_seed(sim.seed, times),
        batch_size=sim.batch_size,
    )
    return evaluate_costs(result, sched, params, config)


# ---------------------------------------------------------------------------
# equal-spacing sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    """Front (0, d, 2d) and/or back (T-2d, T-d, T) three-slot patterns."""

    pattern: str = "both"  # front | back | both
    delta_start: float = 0.1
    delta_stop: float = 5.0
    delta_step: float = 0.1
    gammas: tuple[float, ...] = DEFAULT_GAMMAS

    def __post_init__(self) -> None:
        if self.pattern not in ("front", "back", "both"):
            raise ValueError(f"pattern must be front|back|both, got {self.pattern!r}")
        if self.delta_step <= 0 or self.delta_start <= 0:
            raise ValueError("delta grid must be positive")
        if not self.gammas:
            object.__setattr__(self, "gammas", DEFAULT_GAMMAS)

    def deltas(self) -> list[float]:
        n = int(round((self.delta_stop - self.delta_start) / self.delta_step))
        return [round(self.delta_start + i * self.delta_step, 10) for i in range(n + 1)]

    def schedules(self, horizon: float) -> list[tuple[str, float, tuple[float, ...]]]:
        """(pattern, delta, schedule) triples, invalid spacings dropped."""
        out = []
        for d in self.deltas():
            if self.pattern in ("front", "both"):
                times = (0.0, round(d, 10), round(2 * d, 10))
                if times[2] <= horizon:
                    out.append(("front", d, times))
            if self.pattern in ("back", "both"):
                times = (round(horizon - 2 * d, 10), round(horizon - d, 10), horizon)
                if times[0] >= 0.0:
                    out.append(("back", d, times))
        return out


@dataclass
class SweepRow:
    pattern: str
    delta: float
    times: tuple[float, ...]
    breakdown: CostBreakdown | None
    phi: dict[float, float]
    error: str | None = None


def sweep_equal_spacing(
    spec: SweepSpec,
    params: ModelParams,
    sim: SimulationConfig | None = None,
    solve_config: SolveConfig | None = None,
) -> list[SweepRow]:
    """Price every valid pattern point; solver failures stay in their row.

    The front and back patterns coincide at d = T/2; because evaluation
    seeds derive from the schedule, those two rows come out identical.
    """
    sim = sim or SimulationConfig()
    rows: list[SweepRow] = []
    for pattern, d, times in spec.schedules(params.horizon):
        try:
            breakdown = evaluate_schedule(times, params, sim, solve_config)
            phi = {g: social_cost(breakdown, g) for g in spec.gammas}
            rows.append(SweepRow(pattern, d, times, breakdown, phi))
        except WalkinqError as exc:
            rows.append(SweepRow(pattern, d, times, None, {}, error=str(exc)))
    return rows


def gamma_column(gamma: float) -> str:
    return "phi_g" + format(gamma, "g").replace(".", "")


def write_sweep_csv(rows: list[SweepRow], gammas: Sequence[float], path: str) -> None:
    header = ["delta", "schedule", "phi_s", "e_w", "e_i"] + [
        gamma_column(g) for g in gammas
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            sched_text = ",".join(format(t, "g") for t in row.times)
            if row.breakdown is None:
                writer.writerow([row.delta, sched_text] + ["nan"] * (3 + len(gammas)))
                continue
            b = row.breakdown
            writer.writerow(
                [row.delta, sched_text]
                + [f"{v:.12g}" for v in (b.phi_s, b.e_w, b.e_i)]
                + [f"{row.phi[g]:.12g}" for g in gammas]
            )


def best_equal_spacing(
    rows: list[SweepRow], gamma: float
) -> tuple[SweepRow, float]:
    """Row minimising the social cost at the given weight."""
    priced = [r for r in rows if r.breakdown is not None]
    if not priced:
        raise WalkinqError("sweep produced no successful rows")
    best = min(priced, key=lambda r: social_cost(r.breakdown, gamma))
    return best, social_cost(best.breakdown, gamma)


# ---------------------------------------------------------------------------
# differential evolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DEConfig:
    """Classic rand/1/bin differential evolution over appointment vectors."""

    m: int = 3
    population: int = 0  # 0 = 15 per dimension
    weight: float = 0.8
    crossover: float = 0.9
    max_iters: int = 60
    window: int = 10  # consecutive stalled iterations that stop the search
    objective_tol: float = 1e-4
    seed: int = 424242
    inloop_replications: int = 10_000
    final_replications: int = 1_000_000

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.weight < 2.0:
            raise ValueError("differential weight must be in (0, 2)")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError("crossover rate must be in [0, 1]")
        if self.pop_size() < 4:
            raise ValueError("population must be >= 4")

    def pop_size(self) -> int:
        return self.population if self.population > 0 else 15 * self.m


@dataclass
class DEResult:
    best_schedule: tuple[float, ...]
    phi_star: float
    iterations: int
    converged: bool
    trace: list[list[float]]  # [iteration, incumbent in-loop objective]
    evaluations: int
    diagnostics: dict[str, Any] = field(default_factory=dict)


def repair_schedule(
    x: Sequence[float], horizon: float, min_gap: float
) -> tuple[float, ...]:
    """Sort ascending and enforce the strict-increase invariant.

    Coincident or out-of-order times are separated by at least ``min_gap``
    and clipped into [0, horizon]; applying the repair twice equals once.
    """
    y = np.clip(np.sort(np.asarray(x, dtype=float)), 0.0, horizon)
    for i in range(1, len(y)):
        if y[i] < y[i - 1] + min_gap:
            y[i] = y[i - 1] + min_gap
    if y[-1] > horizon:
        # spreading pushed past the day end: pin the top, cascade back down
        y[-1] = horizon
        for i in range(len(y) - 2, -1, -1):
            if y[i] > y[i + 1] - min_gap:
                y[i] = y[i + 1] - min_gap
    if y[0] < 0.0:
        raise WalkinqError(
            f"cannot fit {len(y)} appointments with gap {min_gap} into [0, {horizon}]"
        )
    return tuple(float(v) for v in y)


def optimize_de(
    params: ModelParams,
    gamma: float,
    config: DEConfig | None = None,
    seeds: Sequence[Sequence[float]] = (),
    solve_config: SolveConfig | None = None,
) -> DEResult:
    """Search appointment vectors in [0, T]^m for minimal social cost.

    rand/1/bin mutation and crossover; every candidate is repaired before
    evaluation; selection is elitist, so the incumbent objective never
    regresses.  The search stops once the incumbent has not moved by more
    than ``objective_tol`` for ``window`` consecutive iterations.  In-loop
    evaluations use cheap replication counts; the incumbent (and any
    caller-provided seed schedules) are re-evaluated at full replications
    and the cheapest wins, so a seeded search can never end worse than
    its seed.
    """
    config = config or DEConfig()
    rng = np.random.default_rng(config.seed)
    n_pop, m = config.pop_size(), config.m
    lo, hi = 0.0, params.horizon
    min_gap = params.delta

    inloop = SimulationConfig(
        replications=config.inloop_replications, seed=config.seed
    )
    final_sim = SimulationConfig(
        replications=config.final_replications, seed=config.seed
    )

    def objective(times: tuple[float, ...], sim: SimulationConfig) -> float:
        try:
            return social_cost(evaluate_schedule(times, params, sim, solve_config), gamma)
        except WalkinqError:
            return math.inf

    pop: list[tuple[float, ...]] = []
    for s in seeds:
        if len(pop) < n_pop:
            pop.append(repair_schedule(s, hi, min_gap))
    while len(pop) < n_pop:
        pop.append(repair_schedule(rng.uniform(lo, hi, m), hi, min_gap))
    cost = np.array([objective(ind, inloop) for ind in pop])
    evaluations = n_pop

    trace: list[list[float]] = [[0, float(cost.min())]]
    stalled = 0
    converged = False
    iterations = 0
    for it in range(1, config.max_iters + 1):
        iterations = it
        for i in range(n_pop):
            a, b, c = rng.choice([j for j in range(n_pop) if j != i], 3, replace=False)
            mutant = np.asarray(pop[a]) + config.weight * (
                np.asarray(pop[b]) - np.asarray(pop[c])
            )
            cross = rng.random(m) < config.crossover
            cross[rng.integers(m)] = True
            trial = np.where(cross, mutant, np.asarray(pop[i]))
            candidate = repair_schedule(trial, hi, min_gap)
            c_cost = objective(candidate, inloop)
            evaluations += 1
            if c_cost <= cost[i]:
                pop[i] = candidate
                cost[i] = c_cost
        best = float(cost.min())
        if abs(best - trace[-1][1]) <= config.objective_tol:
            stalled += 1
        else:
            stalled = 0
        trace.append([it, best])
        if stalled >= config.window:
            converged = True
            break

    # re-evaluate the incumbent and the seed schedules at full replications;
    # in-loop rankings are noisy at cheap replication counts
    finalists = {pop[int(np.argmin(cost))]}
    finalists.update(repair_schedule(s, hi, min_gap) for s in seeds)
    scored = {f: objective(f, final_sim) for f in finalists}
    evaluations += len(scored)
    best_schedule = min(scored, key=scored.get)
    return DEResult(
        best_schedule=best_schedule,
        phi_star=scored[best_schedule],
        iterations=iterations,
        converged=converged,
        trace=trace,
        evaluations=evaluations,
        diagnostics={
            "finalists": {
                ",".join(format(t, "g") for t in k): v for k, v in scored.items()
            },
            "gamma": gamma,
            "lambda": params.lam,
        },
    )
