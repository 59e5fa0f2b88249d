"""Shared model frame: arrival/service rates, horizon and numerical knobs."""

from __future__ import annotations

from dataclasses import dataclass

from .distributions import truncation_level


class WalkinqError(Exception):
    """Base class for package errors."""


class ScheduleError(WalkinqError):
    """Invalid appointment schedule."""


class ConvergenceError(WalkinqError):
    """An iterative solver ran out of its iteration budget."""


class InfeasibleError(WalkinqError):
    """No equilibrium consistent with the requested mode exists."""


@dataclass(frozen=True)
class ModelParams:
    """Problem parameters for one service day.

    lam      mean number of walk-in customers (Poisson)
    mu       service rate (exponential services)
    horizon  closing time T; the day runs on [0, T]
    delta    integration step of the forward scheme
    trunc_mass  Poisson mass captured by the population truncation
    """

    lam: float
    mu: float
    horizon: float
    delta: float = 0.01
    trunc_mass: float = 0.999

    def __post_init__(self) -> None:
        if self.lam <= 0 or self.mu <= 0 or self.horizon <= 0:
            raise ValueError("lam, mu and horizon must be positive")
        if self.delta <= 0 or self.delta > self.horizon:
            raise ValueError("delta must be in (0, horizon]")
        if not 0.0 < self.trunc_mass < 1.0:
            raise ValueError("trunc_mass must be in (0, 1)")

    @property
    def trunc_level(self) -> int:
        """Walk-in population truncation level K."""
        return truncation_level(self.lam, self.trunc_mass)
