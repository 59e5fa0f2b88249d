"""Equilibrium arrival-distribution solvers.

Three entry points, matching the three shapes an equilibrium can take:

* :func:`solve_atom_case` -- an atom of walk-ins at opening time plus a
  density on (0, T].  Bisects the atom mass until the cdf closes at 1.
* :func:`solve_schedule_at_zero` -- an appointment holder sits at time 0,
  so the distribution may instead start with a silent stretch; bisects
  the support start t0 >= 0, falling back to the atom solver when even
  t0 = 0 leaves cdf mass short.
* :func:`solve_early` -- arrivals before opening allowed.  If the closed
  day has no atom that solution stands; otherwise the support start is
  pushed below zero until the cdf closes, and no atom remains.

:func:`solve` dispatches between them.  All solvers share one forward
march per trial; trial traces land in the result diagnostics.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .distributions import poisson_pmf_vector
from .dynamics import (
    DayTrajectory,
    EarlyTrajectory,
    StateVector,
    TimeGrid,
    atom_expected_wait,
    build_time_grid,
    initial_atom_state,
    integrate_day,
    integrate_early,
    state_size,
)
from .model import ConvergenceError, InfeasibleError, ModelParams, ScheduleError
from .waiting import AugmentedSchedule, Schedule, WaitTable, build_wait_table

_EPS = 1e-9


@dataclass(frozen=True)
class SolveConfig:
    """Numerical policy of the solvers.

    atom_bisect_tol  width at which the atom bisection may stop
    cdf_tol          acceptance band for |F(T) - 1|; the bisections keep
                     going until both their interval width and this band
                     are met, so it directly sets the resolution of the
                     atom mass / support start (and through them E_w)
    max_outer_iters  budget for any one bisection loop
    support_slack    relative slack on E_w(t) <= E_w comparisons, to keep
                     round-off from flickering the support on and off
    """

    atom_bisect_tol: float = 0.01
    cdf_tol: float = 5e-4
    cdf_band_fallback: float = 0.005
    max_outer_iters: int = 80
    support_slack: float = 1e-6

    def __post_init__(self) -> None:
        if min(self.atom_bisect_tol, self.cdf_tol, self.support_slack) <= 0:
            raise ValueError("tolerances must be positive")
        if self.cdf_tol >= 0.05:
            raise ValueError("cdf_tol must be below 0.05")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be positive")

    @property
    def cdf_band(self) -> float:
        """Band accepted when the bisection bracket collapses entirely.

        The support re-enters only on grid points, so F(T) moves in jumps
        of order delta*f as the bisection variable crosses a re-entry
        threshold; when F(T)=1 falls inside such a jump no trial can meet
        cdf_tol and the best trial within this coarser band is taken.
        """
        return max(self.cdf_tol, self.cdf_band_fallback)


@dataclass
class EquilibriumResult:
    """Solved equilibrium arrival distribution on one grid.

    The grid columns run over the whole support: times (negative for
    early-arrival runs), density f, cdf F and expected wait E_w(t).  The
    atom mass p_e sits at t = 0 and is already included in the cdf.
    """

    p_e: float
    t0: float
    e_w: float
    early: bool
    times: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    expected_waits: np.ndarray
    schedule: Schedule
    params: ModelParams
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def cdf_terminal(self) -> float:
        return float(self.cdf[-1])

    def day_slice(self) -> slice:
        """Index range of the grid at or after opening time."""
        first = int(np.searchsorted(self.times, -1e-12))
        return slice(first, len(self.times))


def _round12(x: float) -> float:
    if isinstance(x, float) and math.isfinite(x):
        return float(f"{x:.12g}")
    return x


def result_to_dict(result: EquilibriumResult) -> dict[str, Any]:
    grid = [
        [_round12(float(v)) for v in row]
        for row in zip(
            result.times, result.density, result.cdf, result.expected_waits
        )
    ]
    diag = {
        k: (_round12(v) if isinstance(v, float) else v)
        for k, v in result.diagnostics.items()
    }
    return {
        "params": {
            "lambda": result.params.lam,
            "mu": result.params.mu,
            "horizon": result.params.horizon,
            "delta": result.params.delta,
            "trunc_mass": result.params.trunc_mass,
            "trunc_level": result.params.trunc_level,
        },
        "schedule": result.schedule.as_text(),
        "early": result.early,
        "p_e": _round12(result.p_e),
        "t0": _round12(result.t0),
        "E_w": _round12(result.e_w),
        "grid": grid,
        "diagnostics": diag,
    }


def result_from_dict(doc: dict[str, Any]) -> EquilibriumResult:
    params = ModelParams(
        lam=doc["params"]["lambda"],
        mu=doc["params"]["mu"],
        horizon=doc["params"]["horizon"],
        delta=doc["params"]["delta"],
        trunc_mass=doc["params"]["trunc_mass"],
    )
    schedule = Schedule.parse(doc["schedule"], params.horizon)
    grid = np.asarray(doc["grid"], dtype=float)
    return EquilibriumResult(
        p_e=doc["p_e"],
        t0=doc["t0"],
        e_w=doc["E_w"],
        early=doc["early"],
        times=grid[:, 0],
        density=grid[:, 1],
        cdf=grid[:, 2],
        expected_waits=grid[:, 3],
        schedule=schedule,
        params=params,
        diagnostics=dict(doc.get("diagnostics", {})),
    )


def result_to_json(result: EquilibriumResult) -> str:
    return json.dumps(result_to_dict(result), indent=1)


def result_from_json(text: str) -> EquilibriumResult:
    return result_from_dict(json.loads(text))


@dataclass(frozen=True)
class _Problem:
    """Shared per-schedule precomputation."""

    schedule: Schedule
    aug: AugmentedSchedule
    table: WaitTable
    params: ModelParams
    config: SolveConfig

    @staticmethod
    def build(
        schedule: Schedule, params: ModelParams, config: SolveConfig
    ) -> "_Problem":
        aug = schedule.augment()
        table = build_wait_table(aug, params.mu, state_size(params, aug.m) - 1)
        return _Problem(schedule, aug, table, params, config)

    def forced_zero(self, grid: TimeGrid, t0: float) -> np.ndarray:
        # density is pinned to zero at appointment instants strictly after
        # both the support start and the opening time; elsewhere the
        # E_w gate decides
        return grid.jumps & (grid.times > t0 + _EPS) & (grid.times > _EPS)


def _finish(
    prob: _Problem,
    day: DayTrajectory,
    *,
    p_e: float,
    t0: float,
    e_w: float,
    early_traj: EarlyTrajectory | None,
    iterations: int,
    trace: list[list[float]],
    solver: str,
) -> EquilibriumResult:
    if early_traj is not None:
        times = np.concatenate([early_traj.times, day.times])
        density = np.concatenate([early_traj.density, day.density])
        cdf = np.concatenate([early_traj.cdf, day.cdf])
        ew = np.concatenate([early_traj.expected_waits, day.expected_waits])
    else:
        times, density, cdf, ew = day.times, day.density, day.cdf, day.expected_waits
    diagnostics = {
        "solver": solver,
        "iterations": iterations,
        "cdf_terminal": day.cdf_terminal,
        "shed_mass": day.shed_mass,
        "overflow_mass": day.overflow,
        "degenerate_steps": day.degenerate_steps,
        "idle_integral": day.idle_integral,
        "trace": [[_round12(a), _round12(b)] for a, b in trace],
    }
    return EquilibriumResult(
        p_e=p_e,
        t0=t0,
        e_w=e_w,
        early=early_traj is not None,
        times=times,
        density=density,
        cdf=cdf,
        expected_waits=ew,
        schedule=prob.schedule,
        params=prob.params,
        diagnostics=diagnostics,
    )


def _atom_trial(prob: _Problem, grid: TimeGrid, p: float) -> tuple[DayTrajectory, float]:
    state = initial_atom_state(p, prob.params, prob.aug.m)
    ew0 = atom_expected_wait(p, prob.params.lam, prob.table, prob.aug)
    day = integrate_day(
        prob.table,
        prob.aug,
        prob.params,
        grid,
        state,
        cdf0=p,
        t0_idx=0,
        ew0=ew0,
        forced_zero=prob.forced_zero(grid, 0.0),
        slack=prob.config.support_slack,
    )
    return day, ew0


def solve_atom_case(
    schedule: Schedule, params: ModelParams, config: SolveConfig | None = None
) -> EquilibriumResult:
    """Bisect the atom mass p at t=0 until the cdf terminates at 1.

    Each trial seeds the state with a Poisson(p*lam) crowd, gates the
    density on E_w(t) <= E_w(0) and integrates forward; F(T) is
    nondecreasing in p, so plain bisection closes in.
    """
    config = config or SolveConfig()
    prob = _Problem.build(schedule, params, config)
    grid = build_time_grid(prob.aug, params.delta)
    p_lo, p_hi = 0.0, 1.0
    trace: list[list[float]] = []
    best: tuple[float, DayTrajectory, float, float] | None = None
    for it in range(1, config.max_outer_iters + 1):
        p = 0.5 * (p_lo + p_hi)
        day, ew0 = _atom_trial(prob, grid, p)
        ft = day.cdf_terminal
        trace.append([p, ft])
        if best is None or abs(ft - 1.0) < best[0]:
            best = (abs(ft - 1.0), day, ew0, p)
        if ft > 1.0:
            p_hi = p
        else:
            p_lo = p
        done = p_hi - p_lo <= config.atom_bisect_tol and abs(ft - 1.0) <= config.cdf_tol
        collapsed = p_hi - p_lo <= 1e-12 and best[0] <= config.cdf_band
        if done or collapsed:
            if collapsed and not done:
                _, day, ew0, p = best
            return _finish(
                prob,
                day,
                p_e=p,
                t0=0.0,
                e_w=ew0,
                early_traj=None,
                iterations=it,
                trace=trace,
                solver="atom",
            )
    if trace[-1][1] < 1.0 and p_hi >= 1.0 - _EPS:
        raise InfeasibleError(
            f"cdf closes at {trace[-1][1]:.4f} < 1 even with the whole mass at t=0"
        )
    raise ConvergenceError(
        f"atom bisection did not converge in {config.max_outer_iters} iterations "
        f"(last F(T)={trace[-1][1]:.6f})"
    )


def _t0_trial(prob: _Problem, t0: float, delta: float | None = None) -> DayTrajectory:
    params = prob.params
    if delta is not None:
        params = dataclasses.replace(params, delta=delta)
    grid = build_time_grid(prob.aug, params.delta, extra_anchor=t0)
    t0_idx = int(np.argmin(np.abs(grid.times - t0)))
    probs = np.zeros(state_size(params, prob.aug.m))
    probs[0] = 1.0
    return integrate_day(
        prob.table,
        prob.aug,
        params,
        grid,
        StateVector(probs=probs, t=0.0),
        cdf0=0.0,
        t0_idx=t0_idx,
        ew0=None,  # captured at the support start
        forced_zero=prob.forced_zero(grid, t0),
        slack=prob.config.support_slack,
    )


def _ew_at_support_start(prob: _Problem, t0: float) -> float:
    """E_w(t0) refined: the pre-support stretch has no arrivals, so the
    state there is cheap to integrate at a much finer step than the
    solver's own, removing most of the Euler bias from the reported
    equilibrium value."""
    fine = _t0_trial(prob, t0, delta=prob.params.delta / 16.0)
    return fine.equilibrium_value


def solve_schedule_at_zero(
    schedule: Schedule, params: ModelParams, config: SolveConfig | None = None
) -> EquilibriumResult:
    """Equilibrium when an appointment holder is scheduled at time 0.

    First trial: support starts at t0 = 0 with no atom.  Mass short of 1
    means arriving at 0 is attractive enough to carry an atom, so the
    atom solver takes over.  Excess mass means the support starts later:
    t0 is bisected inside successive inter-appointment intervals, moving
    to the next interval when one is exhausted from the left.
    """
    config = config or SolveConfig()
    prob = _Problem.build(schedule, params, config)
    if prob.aug.points[1] != 0.0:
        raise ScheduleError("solve_schedule_at_zero requires an appointment at time 0")
    day0 = _t0_trial(prob, 0.0)
    trace: list[list[float]] = [[0.0, day0.cdf_terminal]]
    if abs(day0.cdf_terminal - 1.0) <= config.cdf_tol:
        return _finish(
            prob,
            day0,
            p_e=0.0,
            t0=0.0,
            e_w=_ew_at_support_start(prob, 0.0),
            early_traj=None,
            iterations=1,
            trace=trace,
            solver="schedule_at_zero",
        )
    if day0.cdf_terminal < 1.0:
        return solve_atom_case(schedule, params, config)

    m = prob.aug.m
    sector = 1
    t_lo, t_hi = prob.aug.points[1], prob.aug.points[2]
    hi_is_edge = True  # no trial inside the current interval rejected the top yet
    best: tuple[float, DayTrajectory, float] | None = None
    for it in range(2, config.max_outer_iters + 1):
        if t_hi - t_lo <= params.delta and hi_is_edge:
            # F(T) > 1 throughout: the support starts beyond this interval
            sector += 1
            if sector > m:
                raise InfeasibleError(
                    "support start exhausted every inter-appointment interval"
                )
            t_lo, t_hi = prob.aug.points[sector], prob.aug.points[sector + 1]
            hi_is_edge = True
            best = None
            if t_hi - t_lo <= params.delta and sector < m:
                continue
        t0 = 0.5 * (t_lo + t_hi)
        day = _t0_trial(prob, t0)
        ft = day.cdf_terminal
        trace.append([t0, ft])
        if best is None or abs(ft - 1.0) < best[0]:
            best = (abs(ft - 1.0), day, t0)
        if ft > 1.0:
            t_lo = t0
        else:
            t_hi = t0
            hi_is_edge = False
        done = abs(ft - 1.0) <= config.cdf_tol and t_hi - t_lo <= params.delta
        collapsed = (
            not hi_is_edge and t_hi - t_lo <= 1e-9 and best[0] <= config.cdf_band
        )
        if done or collapsed:
            if collapsed and not done:
                _, day, t0 = best
            return _finish(
                prob,
                day,
                p_e=0.0,
                t0=t0,
                e_w=_ew_at_support_start(prob, t0),
                early_traj=None,
                iterations=it,
                trace=trace,
                solver="schedule_at_zero",
            )
    raise ConvergenceError(
        f"t0 bisection did not converge in {config.max_outer_iters} iterations "
        f"(last F(T)={trace[-1][1]:.6f})"
    )


def _early_trial(
    prob: _Problem, grid: TimeGrid, t0: float
) -> tuple[EarlyTrajectory, DayTrajectory]:
    early = integrate_early(t0, prob.table, prob.aug, prob.params)
    k_lvl = prob.params.trunc_level
    probs = np.zeros(state_size(prob.params, prob.aug.m))
    probs[: k_lvl + 1] = poisson_pmf_vector(prob.params.lam * early.cdf_at_open, k_lvl)
    # E_w is continuous at opening, so the day march is gated against its
    # own E_w(0) (captured via ew0=None) rather than the pre-opening value
    # E_w(t0); comparing across the Euler drift of the early stretch would
    # shut the support off spuriously right after 0.
    day = integrate_day(
        prob.table,
        prob.aug,
        prob.params,
        grid,
        StateVector(probs=probs, t=0.0),
        cdf0=early.cdf_at_open,
        t0_idx=0,
        ew0=None,
        forced_zero=prob.forced_zero(grid, t0),
        slack=prob.config.support_slack,
    )
    return early, day


def solve_early(
    schedule: Schedule, params: ModelParams, config: SolveConfig | None = None
) -> EquilibriumResult:
    """Equilibrium when walk-ins may queue up before opening.

    A closed-day equilibrium without an atom is already the answer.
    Otherwise the support start moves below zero: expand left in unit
    steps until the cdf overshoots 1, then bisect.  The result never has
    an atom.
    """
    config = config or SolveConfig()
    base = solve(schedule, params, config, early=False)
    if base.p_e == 0.0:
        return dataclasses.replace(
            base,
            early=True,
            diagnostics={**base.diagnostics, "solver": base.diagnostics["solver"] + "+early"},
        )
    prob = _Problem.build(schedule, params, config)
    grid = build_time_grid(prob.aug, params.delta)
    trace: list[list[float]] = []
    t_hi = 0.0
    t0 = -1.0
    iterations = 0
    while True:
        iterations += 1
        if iterations > config.max_outer_iters:
            raise ConvergenceError("early support expansion did not bracket F(T)=1")
        early, day = _early_trial(prob, grid, t0)
        trace.append([t0, day.cdf_terminal])
        if day.cdf_terminal >= 1.0:
            break
        t_hi = t0
        t0 -= 1.0
    t_lo = t0
    best: tuple[float, EarlyTrajectory, DayTrajectory, float] | None = None
    for it in range(iterations + 1, config.max_outer_iters + 1):
        t0 = 0.5 * (t_lo + t_hi)
        early, day = _early_trial(prob, grid, t0)
        ft = day.cdf_terminal
        trace.append([t0, ft])
        if best is None or abs(ft - 1.0) < best[0]:
            best = (abs(ft - 1.0), early, day, t0)
        if ft >= 1.0:
            t_lo = t0
        else:
            t_hi = t0
        done = abs(ft - 1.0) <= config.cdf_tol and t_hi - t_lo <= params.delta
        collapsed = t_hi - t_lo <= 1e-9 and best[0] <= config.cdf_band
        if done or collapsed:
            if collapsed and not done:
                _, early, day, t0 = best
            return _finish(
                prob,
                day,
                p_e=0.0,
                t0=t0,
                e_w=early.expected_waits[0],
                early_traj=early,
                iterations=it,
                trace=trace,
                solver="early",
            )
    raise ConvergenceError(
        f"early t0 bisection did not converge in {config.max_outer_iters} iterations "
        f"(last F(T)={trace[-1][1]:.6f})"
    )


def solve(
    schedule: Schedule,
    params: ModelParams,
    config: SolveConfig | None = None,
    early: bool = False,
) -> EquilibriumResult:
    """Dispatch to the solver matching the schedule shape and arrival mode."""
    config = config or SolveConfig()
    if early:
        return solve_early(schedule, params, config)
    if schedule.m > 0 and schedule.times[0] == 0.0:
        return solve_schedule_at_zero(schedule, params, config)
    return solve_atom_case(schedule, params, config)
