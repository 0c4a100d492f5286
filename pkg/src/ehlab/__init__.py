"""Throughput-optimal power allocation for energy-harvesting transmitters
whose batteries must complete full charge/discharge cycles.

Subpackages by topic: ``numerics`` (Lambert W, fill-time law, gap bound),
``arrivals`` (seeded Bernoulli streams), ``battery`` (exact slot-level
state machines), ``p2p_single`` / ``p2p_dual`` (point-to-point policies),
``simulator`` (Monte Carlo + renewal-reward evaluators), ``mac``
(multiple-access throughput regions), ``cli`` (experiment runner).
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("ehlab")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0.dev"

from .arrivals import ArrivalModel, mean_rate, sample_stream
from .battery import (
    DualBatteryState,
    Phase,
    SingleBatteryState,
    SlotOutcome,
    step_dual,
    step_single,
)
from .errors import SolverError
from .mac import (
    MacInstance,
    RegionBoundary,
    db_boundary_point,
    inner_bound_dual,
    outer_bound,
    region_sweep,
    sb_boundary_point,
    sum_throughput_vs_users,
    weighted_rate_greedy,
)
from .numerics import (
    FillTimeLaw,
    TruncationConfig,
    fill_time_ccdf,
    fill_time_pmf,
    gap_bound_g,
    lambert_w0,
    throughput_upper_bound,
)
from .p2p_dual import (
    DpConfig,
    DpSolution,
    PowerSchedule,
    adaptive_power,
    cp_schedule,
    offline_throughput,
    ona_schedule,
    sandwich_bounds,
    sna_schedule,
    solve_dp,
)
from .p2p_single import solve_greedy, solve_integer, solve_relaxed
from .simulator import TraceStats, analytic_renewal_throughput, dp_policy, simulate

__all__ = [
    "__version__",
    "ArrivalModel",
    "mean_rate",
    "sample_stream",
    "Phase",
    "SingleBatteryState",
    "DualBatteryState",
    "SlotOutcome",
    "step_single",
    "step_dual",
    "SolverError",
    "FillTimeLaw",
    "TruncationConfig",
    "lambert_w0",
    "fill_time_pmf",
    "fill_time_ccdf",
    "throughput_upper_bound",
    "gap_bound_g",
    "solve_relaxed",
    "solve_integer",
    "solve_greedy",
    "PowerSchedule",
    "DpConfig",
    "DpSolution",
    "offline_throughput",
    "ona_schedule",
    "sna_schedule",
    "cp_schedule",
    "adaptive_power",
    "sandwich_bounds",
    "solve_dp",
    "TraceStats",
    "simulate",
    "analytic_renewal_throughput",
    "dp_policy",
    "MacInstance",
    "RegionBoundary",
    "outer_bound",
    "inner_bound_dual",
    "weighted_rate_greedy",
    "sb_boundary_point",
    "db_boundary_point",
    "region_sweep",
    "sum_throughput_vs_users",
]
