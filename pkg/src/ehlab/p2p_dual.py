"""Power-allocation policies for the dual-battery point-to-point link.

In the dual-battery system a renewal period starts with the working
battery full (B units) and ends when the charging battery has collected r
arrivals, a random fill time C with the negative-binomial law of module
``numerics``.  Policies differ in how they spread the B units across the
renewal period:

* offline   - clairvoyant benchmark: knows C, transmits B/C per slot;
* solve_dp  - optimal online policy via average-reward dynamic programming
              on the exact battery chain (no energy discarded at fills);
* ONA       - optimal non-adaptive schedule: waterfilling against the
              fill-time ccdf Fbar, constant over the first r slots, then
              proportional to Fbar_{i-1} up to a horizon N fixed by the
              ratio test  sum_{i<=n} Fbar_{i-1} <= (B+n) Fbar_{n-1};
* SNA       - suboptimal non-adaptive schedule mu * Fbar_{i-1}, the
              analytically tractable policy behind the G(r) gap bound;
* OA / SA   - adaptive variants that rebuild the ONA / SNA schedule on the
              residual instance (current working level, r-j missing
              arrivals) at every energy arrival;
* CP        - constant power B/floor(r/p) while the battery lasts.

Non-adaptive and adaptive policies discard whatever is left in the working
battery when the charging battery fills (renewal = fill instant); the DP
instead clamps the full charging battery and waits for the working battery
to empty, which is the only extension of the transition table consistent
with the cycle constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .numerics import (
    DEFAULT_TRUNCATION,
    FillTimeLaw,
    TruncationConfig,
    fill_time_ccdf_cumsum,
    fill_time_ccdf_table,
    fill_time_pmf_table,
    gap_bound_g,
    throughput_upper_bound,
)

__all__ = [
    "PowerSchedule",
    "DpConfig",
    "DpSolution",
    "DpConvergenceError",
    "offline_throughput",
    "ona_schedule",
    "sna_schedule",
    "cp_schedule",
    "adaptive_power",
    "adaptive_schedule",
    "sandwich_bounds",
    "solve_dp",
]

_RATIO_TEST_RTOL = 1e-9


@dataclass(frozen=True)
class PowerSchedule:
    """Per-slot powers for one renewal period (slot 1 is index 0)."""

    powers: np.ndarray
    horizon_n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "powers", np.asarray(self.powers, dtype=float))
        if np.any(self.powers < -1e-12):
            raise ValueError("schedule powers must be nonnegative")

    def power_at(self, slot: int) -> float:
        """Power of 1-based ``slot``; zero beyond the stored horizon."""
        if slot < 1:
            raise ValueError("slot indices are 1-based")
        if slot > len(self.powers):
            return 0.0
        return float(self.powers[slot - 1])

    @property
    def total_energy(self) -> float:
        return float(self.powers.sum())


def offline_throughput(
    b: float, r: int, p: float, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> float:
    """Clairvoyant benchmark (p/r) sum_n n q_n/2 log2(1 + b/n).

    Truncation drops at most tail_epsilon mass, hence at most
    tail_epsilon * 0.5*log2(1+b/r) throughput.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    n, pmf = fill_time_pmf_table(FillTimeLaw(r, p), trunc)
    terms = n * pmf * 0.5 * np.log2(1.0 + b / n)
    return float(p / r * terms.sum())


def _ona_horizon(b: float, fbar: np.ndarray, cumsum: np.ndarray) -> int:
    """Largest n with sum_{i<=n} Fbar_{i-1} <= (b+n) Fbar_{n-1}.

    The admissible set is a prefix (waterfilling level monotonicity); the
    comparison carries a small relative slack so boundary instances where
    the two sides tie exactly keep their zero-power terminal slot.
    """
    n_arr = np.arange(1, len(fbar) + 1)
    ok = cumsum <= (b + n_arr) * fbar * (1.0 + _RATIO_TEST_RTOL) + 1e-15
    if not ok[0]:  # n=1 always satisfies the test: sum=1 <= (b+1)*1
        return 1
    first_fail = int(np.argmin(ok))
    return first_fail if not ok[first_fail] else int(n_arr[-1])


def ona_schedule(
    b: float, r: int, p: float, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> tuple[PowerSchedule, float]:
    """Optimal non-adaptive schedule and its analytic throughput.

    Powers are (b+N)/S - 1 on slots 1..r and (b+N) Fbar_{i-1}/S - 1 on
    r+1..N with S = sum_{j<=N} Fbar_{j-1}; they telescope to exactly b.
    The throughput is sum_{i<=N} (p/2r) Fbar_{i-1} log2((b+N) Fbar_{i-1}/S).
    """
    if b <= 0:
        raise ValueError("b must be positive")
    law = FillTimeLaw(r, p)
    if p == 1.0:
        powers = np.full(r, b / r)
        return PowerSchedule(powers, r), throughput_upper_bound(p * b / r)
    fbar = fill_time_ccdf_table(law, trunc)[:-1]  # Fbar_0 .. Fbar_{n_max-1}
    cumsum = fill_time_ccdf_cumsum(law, trunc)
    n_star = _ona_horizon(b, fbar, cumsum)
    s = float(cumsum[n_star - 1])
    scale = (b + n_star) / s
    powers = scale * fbar[:n_star] - 1.0
    powers[:r] = scale - 1.0  # Fbar is exactly 1 there
    powers = np.maximum(powers, 0.0)
    tp = float(np.sum(p / (2.0 * r) * fbar[:n_star] * np.log2(scale * fbar[:n_star])))
    return PowerSchedule(powers, n_star), tp


def sna_schedule(
    b: float, r: int, p: float, trunc: TruncationConfig = DEFAULT_TRUNCATION
) -> PowerSchedule:
    """Proportional schedule mu * Fbar_{i-1}.

    The infinite schedule sums to exactly b (sum of Fbar is r/p); the
    stored one stops once the power falls below 1e-12*mu and folds the
    residual into the final slot so the total stays b.
    """
    if b <= 0:
        raise ValueError("b must be positive")
    mu = b * p / r
    law = FillTimeLaw(r, p)
    if p == 1.0:
        return PowerSchedule(np.full(r, mu), r)
    fbar = fill_time_ccdf_table(law, trunc)[:-1]
    keep = fbar >= 1e-12
    n_keep = int(np.argmin(keep)) if not keep[-1] else len(fbar)
    powers = mu * fbar[:n_keep].copy()
    powers[-1] += b - powers.sum()
    return PowerSchedule(powers, n_keep)


def cp_schedule(b: float, r: int, p: float) -> PowerSchedule:
    """Constant power b/floor(r/p) over the first floor(r/p) slots."""
    if b <= 0:
        raise ValueError("b must be positive")
    m = int(math.floor(r / p))
    return PowerSchedule(np.full(m, b / m), m)


def adaptive_schedule(
    working: float,
    arrivals_so_far: int,
    r: int,
    p: float,
    variant: str,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
) -> PowerSchedule:
    """Residual schedule used by the adaptive policies after the j-th
    arrival of a renewal period: the ONA/SNA schedule of the reduced
    instance (current working level, r-j outstanding arrivals)."""
    if not (0 <= arrivals_so_far <= r - 1):
        raise ValueError("arrivals_so_far must lie in [0, r-1]")
    if working < 0:
        raise ValueError("working must be >= 0")
    residual_r = r - arrivals_so_far
    if working == 0.0:
        return PowerSchedule(np.zeros(1), 0)
    if variant == "OA":
        schedule, _ = ona_schedule(working, residual_r, p, trunc)
        return schedule
    if variant == "SA":
        return sna_schedule(working, residual_r, p, trunc)
    raise ValueError(f"unknown adaptive variant {variant!r}")


def adaptive_power(
    working: float,
    arrivals_so_far_j: int,
    r: int,
    p: float,
    slot_i: int,
    variant: str,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
) -> float:
    """Power for the ``slot_i``-th slot (1-based) after the j-th arrival."""
    if slot_i < 1:
        raise ValueError("slot_i is 1-based")
    return adaptive_schedule(working, arrivals_so_far_j, r, p, variant, trunc).power_at(
        slot_i
    )


def sandwich_bounds(b: float, r: int, p: float) -> tuple[float, float]:
    """(T_ub, T_ub - G(r)): the two p-uniform bounds sandwiching the
    non-adaptive throughputs for battery b = r * e_h."""
    mu = p * b / r
    t_ub = throughput_upper_bound(mu)
    return t_ub, t_ub - gap_bound_g(r)


# ---------------------------------------------------------------------------
# Dynamic programming on the exact dual-battery chain
# ---------------------------------------------------------------------------


class DpConvergenceError(SolverError):
    """Relative value iteration did not reach the span target."""

    def __init__(self, iterations: int, span: float, target: float):
        self.iterations = iterations
        self.span = span
        self.target = target
        super().__init__(
            f"no convergence after {iterations} sweeps: span {span:.3e} > {target:.3e}"
        )


@dataclass(frozen=True)
class DpConfig:
    """Discretisation and stopping control for the value iteration.

    ``working_grid_points`` is the number of grid intervals on [0, B]
    (the working level can take that many + 1 values); the charging level
    needs no grid because arrivals are quantised to E_H.  Actions live on
    the same grid so transitions stay exactly on it.
    """

    working_grid_points: int = 200
    convergence_span: float = 1e-7
    action_grid_points: int | None = None
    max_iterations: int = 200_000
    damping: float = 0.05

    def __post_init__(self) -> None:
        if self.working_grid_points < 2:
            raise ValueError("working_grid_points must be >= 2")
        if self.convergence_span <= 0:
            raise ValueError("convergence_span must be positive")
        if self.action_grid_points is not None:
            if (
                self.action_grid_points < 2
                or self.working_grid_points % self.action_grid_points != 0
            ):
                raise ValueError(
                    "action_grid_points must divide working_grid_points"
                )
        if not (0.0 <= self.damping < 1.0):
            raise ValueError("damping must lie in [0, 1)")


@dataclass(frozen=True)
class DpSolution:
    """Stationary deterministic policy and its average reward."""

    gain: float
    working_levels: np.ndarray
    charging_levels: np.ndarray
    policy_powers: np.ndarray  # shape (len(working_levels), len(charging_levels))
    values: np.ndarray  # relative value function, same shape
    iterations: int
    span: float

    def policy_table(self) -> dict[tuple[float, float], float]:
        """Map (working_level, charging_level) -> power."""
        return {
            (float(w), float(c)): float(self.policy_powers[i, j])
            for i, w in enumerate(self.working_levels)
            for j, c in enumerate(self.charging_levels)
        }

    def power_for(self, working: float, charging: float) -> float:
        """Policy lookup with nearest-grid rounding."""
        i = int(np.argmin(np.abs(self.working_levels - working)))
        j = int(np.argmin(np.abs(self.charging_levels - charging)))
        return float(self.policy_powers[i, j])

    def to_rows(self):
        """Rows (working_level, charging_level, power, value) for export."""
        for i, w in enumerate(self.working_levels):
            for j, c in enumerate(self.charging_levels):
                yield (
                    float(w),
                    float(c),
                    float(self.policy_powers[i, j]),
                    float(self.values[i, j]),
                )


def _continuation(values: np.ndarray, p: float, r: int) -> np.ndarray:
    """Expected next-slot value W[k', j] given post-transmission working
    level k' and current charge count j (j = r is the clamped-full layer)."""
    m_top = values.shape[0] - 1
    w = np.empty_like(values)
    if r >= 2:
        w[:, : r - 1] = (1.0 - p) * values[:, : r - 1] + p * values[:, 1:r]
    switch = values[:, r].copy()
    switch[0] = values[m_top, 0]  # empty + full charging -> roles swap
    w[:, r - 1] = (1.0 - p) * values[:, r - 1] + p * switch
    w[:, r] = switch  # charging already clamped full; arrivals overflow
    return w


def solve_dp(
    b: float,
    r: int,
    p: float,
    cfg: DpConfig = DpConfig(),
    method: str = "rvi",
    horizon: int = 20_000,
) -> DpSolution:
    """Average-reward optimum of the dual-battery chain.

    ``method="rvi"`` runs relative value iteration with the aperiodicity
    transform q' = tau*I + (1-tau)*q (same stationary distribution, so the
    gain is unchanged) until the span of the Bellman increments drops
    below ``cfg.convergence_span``; the gain estimate is the midpoint of
    the increment range, accurate to span/2.

    ``method="finite_horizon"`` instead iterates the undamped operator
    ``horizon`` times from zero and reports V_K(s0)/K with s0 = (full,
    empty); it converges like O(1/K) and is kept as a validation mode.
    """
    if b <= 0 or not (0.0 < p <= 1.0) or r < 1:
        raise ValueError("need b > 0, integer r >= 1, p in (0, 1]")
    m = cfg.working_grid_points
    stride = 1 if cfg.action_grid_points is None else m // cfg.action_grid_points
    delta = b / m
    levels = np.linspace(0.0, b, m + 1)
    charge_levels = np.arange(r + 1) * (b / r)  # j = r is the clamped layer
    reward = 0.5 * np.log2(1.0 + np.arange(m + 1) * delta)
    actions = range(0, m + 1, stride)
    tau = cfg.damping if method == "rvi" else 0.0
    c = 1.0 - tau

    def sweep(values: np.ndarray, want_policy: bool = False):
        w = _continuation(values, p, r)
        best = np.full_like(values, -np.inf)
        arg = np.zeros(values.shape, dtype=np.int32) if want_policy else None
        for a in actions:
            cand = reward[a] + c * w[: m + 1 - a, :]
            region = best[a:, :]
            if want_policy:
                better = cand > region
                arg[a:, :][better] = a
            np.maximum(region, cand, out=region)
        if tau:
            best += tau * values
        return best, arg

    values = np.zeros((m + 1, r + 1))
    if method == "finite_horizon":
        # V_K(s0)/K with s0 = (full working, empty charging); values are
        # re-anchored every sweep to keep magnitudes bounded while the
        # accumulated shifts preserve the true V_K.
        shift_total = 0.0
        for _ in range(horizon):
            values, _ = sweep(values)
            shift = values[0, 0]
            shift_total += shift
            values -= shift
        gain = (shift_total + values[m, 0]) / horizon
        _, arg = sweep(values, want_policy=True)
        return DpSolution(
            gain=float(gain),
            working_levels=levels,
            charging_levels=charge_levels,
            policy_powers=arg * delta,
            values=values,
            iterations=horizon,
            span=float("nan"),
        )

    span = math.inf
    iterations = 0
    gain = 0.0
    while span > cfg.convergence_span:
        if iterations >= cfg.max_iterations:
            raise DpConvergenceError(iterations, span, cfg.convergence_span)
        new_values, _ = sweep(values)
        diff = new_values - values
        hi, lo = float(diff.max()), float(diff.min())
        span = hi - lo
        gain = 0.5 * (hi + lo)
        values = new_values - new_values[0, 0]
        iterations += 1
    _, arg = sweep(values, want_policy=True)
    return DpSolution(
        gain=float(gain),
        working_levels=levels,
        charging_levels=charge_levels,
        policy_powers=arg * delta,
        values=values,
        iterations=iterations,
        span=float(span),
    )
