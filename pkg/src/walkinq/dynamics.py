"""State dynamics of the queue and the equilibrium density formulas.

The system state is the probability vector P_n(t) of n customers present
(walk-ins and appointment holders together).  Between appointments it
evolves as a birth-death process with birth rate lam*f(t) and death rate
mu, integrated by an explicit Euler scheme; at appointment instants the
whole vector shifts up one position.

On the support of an equilibrium arrival strategy the expected wait of an
arriving walk-in is constant in t, which pins the density:

    f(t) = [mu * sum_n P_{n+1} (w(n+1,t) - w(n,t)) - sum_n P_n dw(n,t)/dt]
           / [lam * sum_n P_n (w(n+1,t) - w(n,t))]

Before opening (t < 0) there are no departures, the state is exactly
Poisson(lam * F(t)), and the analogous balance gives the early density.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .distributions import poisson_pmf_vector
from .model import ModelParams, ScheduleError, WalkinqError
from .waiting import (
    AugmentedSchedule,
    WaitTable,
    build_wait_table,
    segment_wait_matrices,
    wait_given_queue,
    wait_time_derivative,
)

_ANCHOR_EPS = 1e-9


class DegenerateStateError(WalkinqError):
    """The density denominator vanished (no mass on waiting states)."""


@dataclass
class StateVector:
    """Probabilities of n customers in system at clock time t."""

    probs: np.ndarray
    t: float

    def copy(self) -> "StateVector":
        return StateVector(probs=self.probs.copy(), t=self.t)


def state_size(params: ModelParams, m: int) -> int:
    """Entries 0..N_max with N_max = K + M + 1.

    A walk-in can see at most K walk-ins (population truncation) plus M
    appointment holders; one slack index covers the n+1 lookahead of the
    waiting recursion.
    """
    return params.trunc_level + m + 2


def initial_atom_state(p: float, params: ModelParams, m: int) -> StateVector:
    """State just after an atom of mass p at t=0: Poisson(p*lam), truncated at K."""
    probs = np.zeros(state_size(params, m))
    k = params.trunc_level
    probs[: k + 1] = poisson_pmf_vector(p * params.lam, k)
    return StateVector(probs=probs, t=0.0)


def step_forward(
    state: StateVector,
    f_t: float,
    delta: float,
    lam: float,
    mu: float,
    boundary: float | None = None,
) -> StateVector:
    """One explicit Euler step of the birth-death dynamics.

    The top index uses P_{N_max+1} = 0, so birth mass leaving the top is
    shed (tracked by callers as truncation loss).  Negative round-off is
    clamped to zero.
    """
    if delta <= 0:
        raise ValueError(f"step must be positive, got {delta}")
    if f_t < 0:
        raise ValueError(f"density must be nonnegative, got {f_t}")
    if boundary is not None and state.t + delta > boundary + 1e-12:
        raise ScheduleError(
            f"step from {state.t} by {delta} crosses segment boundary {boundary}"
        )
    p = state.probs
    birth = lam * f_t * p
    death = mu * p
    new = p - delta * (birth + death)
    new[0] += delta * death[0]  # nobody to serve in the empty state
    new[1:] += delta * birth[:-1]
    new[:-1] += delta * death[1:]
    np.clip(new, 0.0, None, out=new)
    return StateVector(probs=new, t=state.t + delta)


def apply_scheduled_arrival(state: StateVector) -> StateVector:
    """Shift the state up one position: an appointment holder has arrived.

    Mass displaced from the top index is dropped here; the integrator
    accumulates it into the overflow diagnostic before shifting.
    """
    new = np.empty_like(state.probs)
    new[0] = 0.0
    new[1:] = state.probs[:-1]
    return StateVector(probs=new, t=state.t)


def expected_wait(
    state: StateVector, table: WaitTable, schedule: AugmentedSchedule, k: int
) -> float:
    """E_w(t) = sum_n P_n(t) w_k(n, t) over the valid region of row k."""
    top = min(len(state.probs) - 1, table.valid_max(k))
    stray = float(np.sum(state.probs[top + 1 :]))
    if stray > 1e-3:
        raise DegenerateStateError(
            f"state carries mass {stray:.2e} beyond validity of segment {k}"
        )
    return float(
        sum(
            state.probs[n] * wait_given_queue(table, schedule, k, n, state.t)
            for n in range(1, top + 1)
        )
    )


def equilibrium_density(
    state: StateVector,
    table: WaitTable,
    schedule: AugmentedSchedule,
    k: int,
    lam: float,
) -> float:
    """Density that keeps E_w(t) flat at the current state; may be negative.

    Callers clamp negative values to zero (the point is then outside the
    support).  Raises :class:`DegenerateStateError` when no probability
    mass sits on states with a waiting gap, which makes the balance
    undefined.
    """
    mu = table.mu
    top = min(len(state.probs) - 1, table.valid_max(k))
    w = np.array(
        [wait_given_queue(table, schedule, k, n, state.t) for n in range(top + 1)]
    )
    dw = np.array(
        [wait_time_derivative(table, schedule, k, n, state.t) for n in range(top)]
    )
    gaps = np.diff(w)
    p = state.probs
    den = lam * float(p[:top] @ gaps)
    if den <= 1e-12:
        raise DegenerateStateError(f"vanishing density denominator at t={state.t}")
    num = mu * float(p[1 : top + 1] @ gaps) - float(p[:top] @ dw)
    return num / den


def atom_expected_wait(
    p: float, lam: float, table: WaitTable, schedule: AugmentedSchedule
) -> float:
    """Expected wait of a tagged walk-in arriving in the atom at t=0.

    She shares the instant with a Poisson(p*lam) crowd and draws a uniform
    queue position among them; an appointment holder scheduled at 0 is
    served before all of them.  The crowd sums run until the Poisson tail
    is numerically negligible; when that reaches past the table's validity
    a wider boundary table is built on the fly, since truncating at the
    population level K visibly understates the wait under heavy atoms.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"atom mass must be in [0, 1], got {p}")
    one = 1 if schedule.points[1] == 0.0 else 0
    rate = p * lam
    n_top = int(np.ceil(rate + 10.0 * np.sqrt(rate) + 20.0))
    if n_top + one > table.valid_max(one):
        table = build_wait_table(schedule, table.mu, n_top + schedule.m + 1)
    pmf = poisson_pmf_vector(rate, n_top)
    shared = pmf / np.arange(1, n_top + 2)
    coef = np.cumsum(shared[::-1])[::-1]  # coef[n] = sum_{i>=n} pmf_i/(i+1)
    wvec = table.values[one, one : one + n_top + 1]
    return float(coef @ wvec)


def early_density(
    cdf_value: float, lam: float, table: WaitTable, schedule: AugmentedSchedule
) -> float:
    """Equilibrium density before opening, given the accumulated cdf mass.

    With no departures before t=0 the state is Poisson(lam * F(t)), and
    holding E_w flat requires

        f(t) = 1 / (lam * sum_n (wtilde(n+1+s) - wtilde(n+s)) P_n(t)),

    with s = 1 when an appointment holder sits at time 0.
    """
    one = 1 if schedule.points[1] == 0.0 else 0
    k_lvl = table.n_max - schedule.m - 1
    pmf = poisson_pmf_vector(lam * cdf_value, k_lvl)
    wvec = table.values[one]
    gaps = wvec[1 + one : k_lvl + 2 + one] - wvec[one : k_lvl + 1 + one]
    return 1.0 / (lam * float(pmf @ gaps))


@dataclass(frozen=True)
class TimeGrid:
    """Integration grid on [0, T] anchored at every appointment instant.

    Steps are uniform within a stretch, with a residual sub-step wherever
    a stretch length is not a whole number of steps, so appointment
    instants (and an optional extra anchor) are exact grid points.
    """

    times: np.ndarray
    segments: np.ndarray  # segment index of each point
    jumps: np.ndarray  # True where an appointment arrives at the point
    steps: np.ndarray  # steps[j] = times[j+1] - times[j]


def build_time_grid(
    schedule: AugmentedSchedule, delta: float, extra_anchor: float | None = None
) -> TimeGrid:
    appts = [t for t in schedule.appointment_times]
    anchors = [0.0, schedule.horizon] + appts
    if extra_anchor is not None and 0.0 < extra_anchor < schedule.horizon:
        anchors.append(extra_anchor)
    anchors = sorted(set(anchors))
    merged = [anchors[0]]
    for a in anchors[1:]:
        if a - merged[-1] > _ANCHOR_EPS:
            merged.append(a)
    pts: list[float] = []
    for a, b in zip(merged, merged[1:]):
        # uniform points strictly before b; the leftover becomes a residual step
        count = int(np.floor(((b - a) - _ANCHOR_EPS) / delta))
        pts.extend(a + i * delta for i in range(count + 1))
    pts.append(merged[-1])
    times = np.array(pts)
    seg = np.searchsorted(np.asarray(appts), times + _ANCHOR_EPS, side="right")
    jumps = np.zeros(len(times), dtype=np.bool_)
    for a in appts:
        j = int(np.argmin(np.abs(times - a)))
        if abs(times[j] - a) <= _ANCHOR_EPS:
            jumps[j] = True
    return TimeGrid(
        times=times,
        segments=seg.astype(np.int64),
        jumps=jumps,
        steps=np.diff(times),
    )


@dataclass
class DayTrajectory:
    """Forward integration output over one grid."""

    times: np.ndarray
    segments: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    expected_waits: np.ndarray
    p_empty: np.ndarray  # P_0 along the grid (post-jump at appointments)
    idle_integral: float  # trapezoid of P_0 over [0, T]
    overflow: float  # mass displaced past the top index by jumps
    final_state: np.ndarray
    equilibrium_value: float  # the E_w the support was gated against
    degenerate_steps: int

    @property
    def cdf_terminal(self) -> float:
        return float(self.cdf[-1])

    @property
    def shed_mass(self) -> float:
        return float(1.0 - np.sum(self.final_state))


@njit(cache=True)
def _march(
    probs,
    big_w,
    big_dw,
    steps,
    valid_n,
    jumps,
    forced_zero,
    density,
    cdf,
    ew_grid,
    p_empty,
    solve_mode,
    t0_idx,
    ew0_init,
    capture_ew0,
    cdf0,
    lam,
    mu,
    slack,
):
    n_pts = big_w.shape[0]
    n_size = probs.shape[0]
    ew0 = ew0_init
    cdf_run = cdf0
    idle = 0.0
    overflow = 0.0
    degenerate = 0
    for j in range(n_pts):
        if jumps[j]:
            overflow += probs[n_size - 1]
            for n in range(n_size - 1, 0, -1):
                probs[n] = probs[n - 1]
            probs[0] = 0.0
        nv = valid_n[j]
        ew = 0.0
        for n in range(nv + 1):
            ew += probs[n] * big_w[j, n]
        ew_grid[j] = ew
        if capture_ew0 and j == t0_idx:
            ew0 = ew
        if solve_mode:
            fj = 0.0
            if j >= t0_idx and not forced_zero[j] and ew <= ew0 * (1.0 + slack):
                num = 0.0
                den = 0.0
                drift = 0.0
                for n in range(nv):
                    dw = big_w[j, n + 1] - big_w[j, n]
                    num += probs[n + 1] * dw
                    den += probs[n] * dw
                    drift += probs[n] * big_dw[j, n]
                if den > 1e-12:
                    fj = (mu * num - drift) / (lam * den)
                    if fj < 0.0:
                        fj = 0.0
                else:
                    degenerate += 1
            density[j] = fj
        cdf[j] = cdf_run
        p_empty[j] = probs[0]
        if j < n_pts - 1:
            h = steps[j]
            fj = density[j]
            cdf_run += h * fj
            hb = h * lam * fj
            hd = h * mu
            prev = probs[0]
            val = probs[0] - hb * probs[0] + hd * probs[1]
            probs[0] = val if val > 0.0 else 0.0
            for n in range(1, n_size):
                up = probs[n + 1] if n + 1 < n_size else 0.0
                cur = probs[n]
                val = cur - (hb + hd) * cur + hb * prev + hd * up
                probs[n] = val if val > 0.0 else 0.0
                prev = cur
            idle += h * 0.5 * (p_empty[j] + probs[0])
    return idle, overflow, degenerate, ew0


def integrate_day(
    table: WaitTable,
    schedule: AugmentedSchedule,
    params: ModelParams,
    grid: TimeGrid,
    start: StateVector,
    cdf0: float,
    *,
    t0_idx: int = 0,
    ew0: float | None = None,
    forced_zero: np.ndarray | None = None,
    density: np.ndarray | None = None,
    slack: float = 1e-6,
) -> DayTrajectory:
    """March the state over [0, T], either solving for the density or replaying one.

    Solve mode (``density is None``): from grid index ``t0_idx`` on, the
    density follows :func:`equilibrium_density` wherever the current
    E_w(t) does not exceed the gate value (``ew0``, or E_w at ``t0_idx``
    when ``ew0`` is None), and is zero elsewhere and at ``forced_zero``
    points.  Replay mode: the given density drives the dynamics and only
    E_w and the state outputs are recomputed.
    """
    n_pts = len(grid.times)
    big_w, big_dw = segment_wait_matrices(table, schedule, grid.times, grid.segments)
    valid_n = table.n_max - (table.m - grid.segments)
    solve_mode = density is None
    f_arr = np.empty(n_pts) if solve_mode else np.asarray(density, dtype=float).copy()
    if len(f_arr) != n_pts:
        raise ValueError("density grid does not match the time grid")
    if forced_zero is None:
        forced_zero = np.zeros(n_pts, dtype=np.bool_)
    cdf = np.empty(n_pts)
    ew_grid = np.empty(n_pts)
    p_empty = np.empty(n_pts)
    probs = start.probs.copy()
    idle, overflow, degenerate, ew0_out = _march(
        probs,
        big_w,
        big_dw,
        grid.steps,
        valid_n.astype(np.int64),
        grid.jumps,
        forced_zero,
        f_arr,
        cdf,
        ew_grid,
        p_empty,
        solve_mode,
        t0_idx,
        -1.0 if ew0 is None else ew0,
        ew0 is None,
        cdf0,
        params.lam,
        params.mu,
        slack,
    )
    return DayTrajectory(
        times=grid.times,
        segments=grid.segments,
        density=f_arr,
        cdf=cdf,
        expected_waits=ew_grid,
        p_empty=p_empty,
        idle_integral=idle,
        overflow=overflow,
        final_state=probs,
        equilibrium_value=ew0_out,
        degenerate_steps=degenerate,
    )


@dataclass
class EarlyTrajectory:
    """Pre-opening stretch of an equilibrium with early arrivals."""

    times: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    expected_waits: np.ndarray
    cdf_at_open: float


def integrate_early(
    t0: float,
    table: WaitTable,
    schedule: AugmentedSchedule,
    params: ModelParams,
) -> EarlyTrajectory:
    """Integrate the early-bird stretch [t0, 0) with the closed-form state law.

    No departures happen before opening, so the state stays Poisson with
    mean lam*F(t) and F solves the scalar ODE dF/dt = early_density(F).
    """
    if t0 >= 0:
        raise ValueError(f"early start must be negative, got {t0}")
    one = 1 if schedule.points[1] == 0.0 else 0
    k_lvl = table.n_max - schedule.m - 1
    wvec = table.values[one]
    gaps = wvec[1 + one : k_lvl + 2 + one] - wvec[one : k_lvl + 1 + one]
    waits = wvec[one : k_lvl + 1 + one]
    n_whole = int(np.floor(-t0 / params.delta + _ANCHOR_EPS))
    pts = [t0 + i * params.delta for i in range(n_whole + 1)]
    if pts[-1] > -_ANCHOR_EPS:
        pts = pts[:-1]
    times = np.array(pts)
    density = np.empty(len(times))
    cdf = np.empty(len(times))
    ew = np.empty(len(times))
    lam = params.lam
    cdf_run = 0.0
    for j, t in enumerate(times):
        pmf = poisson_pmf_vector(lam * cdf_run, k_lvl)
        density[j] = 1.0 / (lam * float(pmf @ gaps))
        ew[j] = -t + float(pmf @ waits)
        cdf[j] = cdf_run
        h = times[j + 1] - t if j + 1 < len(times) else -times[j]
        cdf_run += h * density[j]
    return EarlyTrajectory(
        times=times, density=density, cdf=cdf, expected_waits=ew, cdf_at_open=cdf_run
    )
