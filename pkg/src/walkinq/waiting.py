"""Appointment schedules and the conditional waiting time of a walk-in.

A tagged customer who enters during segment k (between the k-th and
(k+1)-th appointment) with n customers in front of her waits for those n
services, plus every later appointment holder who arrives before her own
service starts and overtakes her.  The closed form conditions on how many
services complete before the next appointment:

    w_k(n, t) = E(tau; n, mu)
                + sum_{i=0}^{n-1} Pois(tau; i) * (tau + wtilde_{k+1}(n-i+1))

with tau the time to the next appointment, E the truncated Erlang mean
and wtilde the same quantity evaluated at segment starts.  On the last
segment no appointment can overtake, so the wait is plainly n/mu.

The boundary table wtilde is built backwards from the last segment.  A
row k entry at argument n reads row k+1 at argument n+1, so row k is
only valid for n <= n_max - (M - k); reads outside that triangle raise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import poisson_pmf_vector, truncated_erlang_mean
from .model import ScheduleError


@dataclass(frozen=True)
class Schedule:
    """Appointment instants for M customers on [0, horizon]."""

    times: tuple[float, ...]
    horizon: float

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ScheduleError(f"horizon must be positive, got {self.horizon}")
        ts = self.times
        if any(t < 0 or t > self.horizon for t in ts):
            raise ScheduleError(f"appointments must lie in [0, {self.horizon}]: {ts}")
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ScheduleError(f"appointments must be strictly increasing: {ts}")

    @property
    def m(self) -> int:
        return len(self.times)

    def augment(self) -> "AugmentedSchedule":
        return AugmentedSchedule(
            points=(0.0, *self.times, self.horizon), horizon=self.horizon
        )

    def as_text(self) -> str:
        return ",".join(format(t, "g") for t in self.times)

    @staticmethod
    def parse(text: str, horizon: float) -> "Schedule":
        """Parse a comma-separated decimal list, e.g. ``"1,3,5"``."""
        text = text.strip()
        if not text:
            return Schedule(times=(), horizon=horizon)
        try:
            times = tuple(float(tok) for tok in text.split(","))
        except ValueError as exc:
            raise ScheduleError(f"cannot parse schedule {text!r}") from exc
        return Schedule(times=times, horizon=horizon)


@dataclass(frozen=True)
class AugmentedSchedule:
    """Schedule padded with the day boundaries: points[0]=0, points[M+1]=T.

    Segment k is the half-open interval [points[k], points[k+1]); the last
    segment M additionally owns the closing time T.  points[1] may equal 0
    and points[M] may equal T, leaving zero-width segments at the ends.
    """

    points: tuple[float, ...]
    horizon: float

    @property
    def m(self) -> int:
        return len(self.points) - 2

    @property
    def appointment_times(self) -> tuple[float, ...]:
        return self.points[1:-1]

    def segment_of(self, t: float) -> int:
        """Index of the segment owning time t (after any jump at t)."""
        if t < 0 or t > self.horizon:
            raise ScheduleError(f"time {t} outside [0, {self.horizon}]")
        k = 0
        for j in range(1, self.m + 1):
            if self.points[j] <= t:
                k = j
        return k

    def gap(self, k: int) -> float:
        """Inter-appointment time t_k = points[k+1] - points[k]."""
        return self.points[k + 1] - self.points[k]


@dataclass(frozen=True)
class WaitTable:
    """Boundary waits wtilde[k][n] for segments k=0..M and queue sizes n.

    Entries outside the triangular validity region are NaN and guarded by
    :meth:`valid_max`; reading them is a programming error, not a zero.
    """

    values: np.ndarray  # (M+1, n_max+1), NaN outside validity
    mu: float
    n_max: int

    @property
    def m(self) -> int:
        return self.values.shape[0] - 1

    def valid_max(self, k: int) -> int:
        """Largest queue argument n for which row k is defined."""
        return self.n_max - (self.m - k)

    def at(self, k: int, n: int) -> float:
        if not 0 <= k <= self.m:
            raise IndexError(f"segment {k} outside 0..{self.m}")
        if not 0 <= n <= self.valid_max(k):
            raise IndexError(
                f"queue size {n} outside validity 0..{self.valid_max(k)} of row {k}"
            )
        return float(self.values[k, n])


def build_wait_table(schedule: AugmentedSchedule, mu: float, n_max: int) -> WaitTable:
    """Backward recursion for the boundary waits, from wtilde_M(n) = n/mu."""
    if mu <= 0:
        raise ValueError(f"service rate must be positive, got {mu}")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    m = schedule.m
    values = np.full((m + 1, n_max + 1), np.nan)
    values[m] = np.arange(n_max + 1) / mu
    for k in range(m - 1, -1, -1):
        tk = schedule.gap(k)
        pois = poisson_pmf_vector(mu * tk, n_max)
        top = n_max - (m - k)
        values[k, 0] = 0.0
        for n in range(1, top + 1):
            mean_served = truncated_erlang_mean(tk, n, mu)
            # sum_{i<n} Pois(tk; i) * (tk + wtilde_{k+1}(n-i+1))
            carry = pois[:n] @ (tk + values[k + 1, n + 1 : 1 : -1])
            values[k, n] = mean_served + carry
    return WaitTable(values=values, mu=mu, n_max=n_max)


def _check_segment_time(schedule: AugmentedSchedule, k: int, t: float) -> None:
    lo = schedule.points[k]
    hi = schedule.points[k + 1]
    if k == schedule.m:
        ok = lo <= t <= schedule.horizon
    else:
        ok = lo <= t < hi
    if not ok:
        raise ScheduleError(f"time {t} not in segment {k} = [{lo}, {hi})")


def wait_given_queue(
    table: WaitTable, schedule: AugmentedSchedule, k: int, n: int, t: float
) -> float:
    """Expected wait of a customer at time t in segment k with n in front."""
    _check_segment_time(schedule, k, t)
    if not 0 <= n <= table.valid_max(k):
        raise IndexError(
            f"queue size {n} outside validity 0..{table.valid_max(k)} of segment {k}"
        )
    if n == 0:
        return 0.0
    if k == schedule.m:
        return n / table.mu
    tau = schedule.points[k + 1] - t
    pois = poisson_pmf_vector(table.mu * tau, n)
    mean_served = truncated_erlang_mean(tau, n, table.mu)
    carry = pois[:n] @ (tau + table.values[k + 1, n + 1 : 1 : -1])
    return float(mean_served + carry)


def wait_time_derivative(
    table: WaitTable, schedule: AugmentedSchedule, k: int, n: int, t: float
) -> float:
    """Time derivative of :func:`wait_given_queue` away from appointments.

    Four contributions: the density of the n-th completion landing exactly
    at the next appointment, the drift of the carried Poisson weights, and
    the two boundary terms of the weight recurrence.
    """
    _check_segment_time(schedule, k, t)
    if not 0 <= n <= table.valid_max(k):
        raise IndexError(
            f"queue size {n} outside validity 0..{table.valid_max(k)} of segment {k}"
        )
    if n == 0 or k == schedule.m:
        return 0.0
    mu = table.mu
    tau = schedule.points[k + 1] - t
    pois = poisson_pmf_vector(mu * tau, n)
    wt = table.values[k + 1]
    d = -tau * mu * pois[n - 1] - float(np.sum(pois[:n]))
    d += mu * pois[0] * (tau + wt[n + 1])
    if n >= 2:
        # sum_{i=1}^{n-1} (Pois(i-1) - Pois(i)) * (tau + wtilde_{k+1}(n-i+1))
        diffs = pois[: n - 1] - pois[1:n]
        d -= mu * (diffs @ wt[n:1:-1] + tau * (pois[0] - pois[n - 1]))
    return float(d)


def segment_wait_matrices(
    table: WaitTable,
    schedule: AugmentedSchedule,
    times: np.ndarray,
    segments: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Waits and their time derivatives for a whole integration grid.

    Returns (W, DW), each shaped (len(times), n_max+1), with W[j, n] the
    expected wait at grid point j for n customers in front and DW its time
    derivative.  Entries beyond the validity of the point's segment are
    NaN.  This is the vectorised twin of :func:`wait_given_queue` /
    :func:`wait_time_derivative` used by the forward solver.
    """
    mu = table.mu
    n_cols = table.n_max + 1
    big_w = np.full((len(times), n_cols), np.nan)
    big_dw = np.full((len(times), n_cols), np.nan)
    for k in np.unique(segments):
        rows = np.flatnonzero(segments == k)
        if k == table.m:
            big_w[rows] = np.arange(n_cols) / mu
            big_dw[rows] = 0.0
            continue
        tau = schedule.points[k + 1] - times[rows]
        pois = np.empty((len(rows), n_cols))
        pois[:, 0] = np.exp(-mu * tau)
        for i in range(1, n_cols):
            pois[:, i] = pois[:, i - 1] * (mu * tau) / i
        cum = np.cumsum(pois, axis=1)
        wt = table.values[k + 1]
        top = table.valid_max(k)
        big_w[rows, 0] = 0.0
        big_dw[rows, 0] = 0.0
        for n in range(1, top + 1):
            mean_served = (n / mu) * (1.0 - cum[:, n])
            carry = pois[:, :n] @ wt[n + 1 : 1 : -1] + tau * cum[:, n - 1]
            big_w[rows, n] = mean_served + carry
            d = -tau * mu * pois[:, n - 1] - cum[:, n - 1]
            d += mu * pois[:, 0] * (tau + wt[n + 1])
            if n >= 2:
                diffs = pois[:, : n - 1] - pois[:, 1:n]
                d -= mu * (diffs @ wt[n:1:-1] + tau * (pois[:, 0] - pois[:, n - 1]))
            big_dw[rows, n] = d
    return big_w, big_dw
