"""Self-check of a solved equilibrium against its defining property.

The check replays the stored density through the state dynamics from
scratch and recomputes E_w(t) on the full grid: on the support the wait
must sit at the equilibrium value, off the support it must not fall
below it.  Structural facts are checked alongside: the cdf carries no
jump other than the atom at 0, no atom survives under early arrivals,
and the density vanishes just after every appointment strictly inside
the day (and just after the atom).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import poisson_pmf_vector
from .dynamics import (
    DayTrajectory,
    StateVector,
    TimeGrid,
    atom_expected_wait,
    initial_atom_state,
    integrate_day,
    state_size,
)
from .equilibrium import EquilibriumResult
from .model import ModelParams
from .waiting import AugmentedSchedule, Schedule, build_wait_table

_EPS = 1e-9


@dataclass
class VerificationReport:
    e_w: float
    max_on_support_rel_dev: float
    min_off_support_margin: float  # min of E_w(t) - E_w over the gap points
    cdf_terminal: float
    cdf_jump_free: bool  # stored cdf increments all explained by the density
    atom_mass: float
    no_atom_under_early: bool
    gap_after_appointment: dict[float, bool]
    gap_after_atom: bool
    shed_mass: float

    def equilibrium_ok(
        self, rel_dev_tol: float = 0.02, margin_tol_factor: float = 1e-3
    ) -> bool:
        """Deviation bounds of the defining property at solver resolution."""
        return (
            self.max_on_support_rel_dev <= rel_dev_tol
            and self.min_off_support_margin >= -margin_tol_factor * self.e_w
        )

    def structure_ok(self) -> bool:
        return (
            self.cdf_jump_free
            and self.no_atom_under_early
            and all(self.gap_after_appointment.values())
            and self.gap_after_atom
        )


def _grid_from_times(schedule: AugmentedSchedule, times: np.ndarray) -> TimeGrid:
    appts = np.asarray(schedule.appointment_times)
    segments = np.searchsorted(appts, times + _EPS, side="right").astype(np.int64)
    jumps = np.zeros(len(times), dtype=np.bool_)
    for a in appts:
        j = int(np.argmin(np.abs(times - a)))
        if abs(times[j] - a) <= _EPS:
            jumps[j] = True
    return TimeGrid(times=times, segments=segments, jumps=jumps, steps=np.diff(times))


def _refine_grid(
    times: np.ndarray, density: np.ndarray, refine: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Subdivide every stored interval; the density is piecewise constant.

    Returns (fine times, fine density, indices of the original points).
    """
    if refine <= 1:
        return times, density, np.arange(len(times))
    pieces = [np.array([times[0]])]
    for j in range(len(times) - 1):
        sub = np.linspace(times[j], times[j + 1], refine + 1)[1:]
        pieces.append(sub)
    fine_t = np.concatenate(pieces)
    fine_f = np.repeat(density[:-1], refine)
    fine_f = np.append(fine_f, density[-1])
    coarse_idx = np.arange(0, len(fine_t), refine)
    return fine_t, fine_f, coarse_idx


def replay(
    result: EquilibriumResult,
    schedule: Schedule | None = None,
    params: ModelParams | None = None,
    refine: int = 1,
) -> tuple[np.ndarray, np.ndarray, "DayTrajectory"]:
    """Drive the dynamics from scratch with the stored density.

    Returns the recomputed E_w grid, the recomputed cdf grid (both at the
    stored resolution), and the replayed day trajectory.  ``refine``
    subdivides every stored step for the state integration, which tightens
    the Euler error of derived integrals (notably idle time) without
    touching the stored distribution.
    """
    schedule = schedule or result.schedule
    params = params or result.params
    aug = schedule.augment()
    table = build_wait_table(aug, params.mu, state_size(params, aug.m) - 1)

    day = result.day_slice()
    first = day.start
    ew_rec = np.empty(len(result.times))
    replay_cdf = np.empty(len(result.times))

    # pre-opening stretch: closed-form Poisson state law driven by the density
    one = 1 if aug.points[1] == 0.0 else 0
    k_lvl = params.trunc_level
    waits = table.values[one, one : one + k_lvl + 1]
    neg_t, neg_f, neg_idx = _refine_grid(
        result.times[:first], result.density[:first], refine
    ) if first > 1 else (result.times[:first], result.density[:first], np.arange(first))
    cdf_run = 0.0
    keep = 0
    for j in range(len(neg_t)):
        if keep < first and j == neg_idx[keep]:
            pmf = poisson_pmf_vector(params.lam * cdf_run, k_lvl)
            ew_rec[keep] = -neg_t[j] + float(pmf @ waits)
            replay_cdf[keep] = cdf_run
            keep += 1
        h = (neg_t[j + 1] - neg_t[j]) if j + 1 < len(neg_t) else -neg_t[j]
        cdf_run += h * neg_f[j]

    if first > 0:
        probs = np.zeros(state_size(params, aug.m))
        probs[: k_lvl + 1] = poisson_pmf_vector(params.lam * cdf_run, k_lvl)
        start = StateVector(probs=probs, t=0.0)
        cdf0 = cdf_run
    else:
        start = initial_atom_state(result.p_e, params, aug.m)
        cdf0 = result.p_e

    fine_t, fine_f, coarse_idx = _refine_grid(
        result.times[day], result.density[day], refine
    )
    grid = _grid_from_times(aug, fine_t)
    traj = integrate_day(table, aug, params, grid, start, cdf0=cdf0, density=fine_f)
    ew_rec[day] = traj.expected_waits[coarse_idx]
    replay_cdf[day] = traj.cdf[coarse_idx]
    return ew_rec, replay_cdf, traj


def verify_equilibrium(
    result: EquilibriumResult,
    schedule: Schedule | None = None,
    params: ModelParams | None = None,
) -> VerificationReport:
    schedule = schedule or result.schedule
    params = params or result.params
    aug = schedule.augment()
    table = build_wait_table(aug, params.mu, state_size(params, aug.m) - 1)
    day = result.day_slice()
    first = day.start
    ew_rec, replay_cdf, traj = replay(result, schedule, params)

    e_w = result.e_w
    on = result.density > 0
    deviations = np.abs(ew_rec[on] - e_w) / e_w if on.any() else np.array([0.0])
    max_dev = float(np.max(deviations))
    if result.p_e > 0:
        atom_ew = atom_expected_wait(result.p_e, params.lam, table, aug)
        max_dev = max(max_dev, abs(atom_ew - e_w) / e_w)
    off = ~on
    min_margin = float(np.min(ew_rec[off] - e_w)) if off.any() else np.inf

    stored_increments = np.diff(result.cdf)
    density_increments = np.diff(result.times) * result.density[:-1]
    cdf_jump_free = bool(
        np.max(np.abs(stored_increments - density_increments), initial=0.0) <= 1e-9
    )

    gap_checks: dict[float, bool] = {}
    for a in aug.appointment_times:
        if not 0.0 < a < aug.horizon:
            continue
        j = int(np.argmin(np.abs(result.times - a)))
        nxt = min(j + 1, len(result.times) - 1)
        gap_checks[a] = bool(result.density[j] == 0.0 and result.density[nxt] == 0.0)
    if result.p_e > 0:
        nxt = min(first + 1, len(result.times) - 1)
        gap_after_atom = bool(
            result.density[first] == 0.0 and result.density[nxt] == 0.0
        )
    else:
        gap_after_atom = True

    return VerificationReport(
        e_w=e_w,
        max_on_support_rel_dev=max_dev,
        min_off_support_margin=min_margin,
        cdf_terminal=result.cdf_terminal,
        cdf_jump_free=cdf_jump_free,
        atom_mass=result.p_e,
        no_atom_under_early=(not result.early) or result.p_e == 0.0,
        gap_after_appointment=gap_checks,
        gap_after_atom=gap_after_atom,
        shed_mass=traj.shed_mass,
    )
