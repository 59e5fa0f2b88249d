"""Single-server queue with prioritised appointments and strategic walk-ins.

Computes the Nash-equilibrium arrival-time distribution of walk-in
customers for a given appointment schedule, evaluates waiting/idle-time
social costs by numerical integration and discrete-event simulation, and
searches for cost-minimising schedules.
"""

from .distributions import (
    erlang_cdf,
    erlang_pdf,
    poisson_weight,
    truncated_erlang_mean,
    truncation_level,
)
from .dynamics import (
    StateVector,
    apply_scheduled_arrival,
    atom_expected_wait,
    early_density,
    equilibrium_density,
    expected_wait,
    step_forward,
)
from .equilibrium import (
    EquilibriumResult,
    SolveConfig,
    result_from_json,
    result_to_json,
    solve,
    solve_atom_case,
    solve_early,
    solve_schedule_at_zero,
)
from .model import (
    ConvergenceError,
    InfeasibleError,
    ModelParams,
    ScheduleError,
    WalkinqError,
)
from .verify import VerificationReport, verify_equilibrium
from .waiting import (
    AugmentedSchedule,
    Schedule,
    WaitTable,
    build_wait_table,
    wait_given_queue,
    wait_time_derivative,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedSchedule",
    "ConvergenceError",
    "EquilibriumResult",
    "InfeasibleError",
    "ModelParams",
    "Schedule",
    "ScheduleError",
    "SolveConfig",
    "StateVector",
    "VerificationReport",
    "WaitTable",
    "WalkinqError",
    "apply_scheduled_arrival",
    "atom_expected_wait",
    "build_wait_table",
    "early_density",
    "equilibrium_density",
    "erlang_cdf",
    "erlang_pdf",
    "expected_wait",
    "poisson_weight",
    "result_from_json",
    "result_to_json",
    "solve",
    "solve_atom_case",
    "solve_early",
    "solve_schedule_at_zero",
    "step_forward",
    "truncated_erlang_mean",
    "truncation_level",
    "verify_equilibrium",
    "wait_given_queue",
    "wait_time_derivative",
]
