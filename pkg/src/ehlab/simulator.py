"""Monte Carlo engine and analytic renewal-reward evaluators.

``simulate`` runs a named policy slot by slot against sampled Bernoulli
arrivals using the exact battery state machines of module ``battery``;
``analytic_renewal_throughput`` evaluates any fixed per-renewal schedule
through the renewal-reward identity

    T = sum_i (p/2r) Fbar_{i-1} log2(1 + P_i),

which is the exact long-term average when renewals coincide with battery
fill instants.  The two routes cross-validate each other.

Statistics collected per trace: average throughput (bits/slot), idle
fraction (slots with zero transmit power), discarded energy per slot with
a per-category breakdown, and a 95% batch-means confidence half-width
(renewal correlation makes i.i.d. confidence intervals invalid, so the
trace is cut into 30 batches).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .arrivals import ArrivalModel, mean_rate, stream_blocks
from .battery import DualBatteryState, Phase, SingleBatteryState, step_dual, step_single
from .numerics import DEFAULT_TRUNCATION, FillTimeLaw, TruncationConfig, fill_time_ccdf_table
from .p2p_dual import (
    PowerSchedule,
    adaptive_schedule,
    cp_schedule,
    ona_schedule,
    sna_schedule,
)
from .p2p_single import solve_integer

__all__ = [
    "TraceStats",
    "simulate",
    "analytic_renewal_throughput",
    "dp_policy",
    "DUAL_POLICIES",
    "SINGLE_POLICIES",
]

_T_STUDENT_29_975 = 2.045  # two-sided 95%, 29 degrees of freedom
_NUM_BATCHES = 30


@dataclass(frozen=True)
class TraceStats:
    avg_throughput: float
    idle_fraction: float
    discarded_per_slot: float
    num_slots: int
    ci_halfwidth: float
    discarded_overflow_per_slot: float = 0.0
    discarded_leftover_per_slot: float = 0.0
    discarded_halfduplex_per_slot: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 <= self.idle_fraction <= 1.0):
            raise ValueError("idle_fraction outside [0, 1]")
        if self.discarded_per_slot < 0 or self.avg_throughput < 0:
            raise ValueError("negative trace statistics")


def analytic_renewal_throughput(
    schedule: PowerSchedule,
    r: int,
    p: float,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
) -> float:
    """Renewal-reward value of a fixed schedule under fill-instant renewals."""
    n = len(schedule.powers)
    if n == 0:
        return 0.0
    fbar = fill_time_ccdf_table(FillTimeLaw(r, p), trunc, i_max=max(n - 1, 0))
    return float(
        np.sum(p / (2.0 * r) * fbar[:n] * np.log2(1.0 + schedule.powers))
    )


class _SchedulePolicy:
    """Fixed per-renewal schedule (ONA / SNA / CP); resets at renewals."""

    system = "dual"
    discard_on_fill = True

    def __init__(self, schedule: PowerSchedule):
        self.schedule = schedule
        self.slot = 0  # slots since last renewal

    def begin_renewal(self, working: float) -> None:
        self.slot = 0

    def notify_arrival(self, count: int, working: float) -> None:
        pass

    def next_power(self) -> float:
        self.slot += 1
        return self.schedule.power_at(self.slot)


class _AdaptivePolicy:
    """OA / SA: rebuilds the residual schedule at every energy arrival."""

    system = "dual"
    discard_on_fill = True

    def __init__(self, b: float, r: int, p: float, variant: str, trunc: TruncationConfig):
        self.b, self.r, self.p = b, r, p
        self.variant = variant
        self.trunc = trunc
        self.residual: PowerSchedule | None = None
        self.slot_in_phase = 0

    def begin_renewal(self, working: float) -> None:
        self.residual = adaptive_schedule(
            working, 0, self.r, self.p, self.variant, self.trunc
        )
        self.slot_in_phase = 0

    def notify_arrival(self, count: int, working: float) -> None:
        if count <= self.r - 1:
            self.residual = adaptive_schedule(
                working, count, self.r, self.p, self.variant, self.trunc
            )
            self.slot_in_phase = 0

    def next_power(self) -> float:
        self.slot_in_phase += 1
        return self.residual.power_at(self.slot_in_phase)


class _DpPolicy:
    """Table lookup into a solved DP policy; no discard at fills."""

    system = "dual"
    discard_on_fill = False

    def __init__(self, solution):
        self.solution = solution
        self.working = None
        self.charging = None

    def begin_renewal(self, working: float) -> None:
        pass

    def notify_arrival(self, count: int, working: float) -> None:
        pass

    def next_power(self) -> float:  # state injected by the simulator loop
        return self.solution.power_for(self.working, self.charging)


class _SingleOptimalPolicy:
    """Constant power 2B/N* during discharge phases."""

    system = "single"

    def __init__(self, b: float, mu: float):
        self.power = solve_integer(b, mu).integer_power


class _OfflinePolicy:
    """Clairvoyant constant power B/C per renewal; needs arrival lookahead."""

    system = "dual"
    discard_on_fill = True
    needs_lookahead = True

    def __init__(self, b: float):
        self.b = b
        self.slot = 0
        self.fill_time = None

    def begin_renewal_with_fill_time(self, fill_time: int) -> None:
        self.fill_time = fill_time
        self.slot = 0

    def next_power(self) -> float:
        self.slot += 1
        return self.b / self.fill_time if self.slot <= self.fill_time else 0.0


def dp_policy(solution) -> "_DpPolicy":
    """Wrap a ``DpSolution`` for use as a ``simulate`` policy."""
    return _DpPolicy(solution)


def _make_policy(policy, model: ArrivalModel, trunc: TruncationConfig):
    """Resolve a policy identifier (or pass through a policy object)."""
    if not isinstance(policy, str):
        return policy
    b = model.battery_capacity
    if b is None:
        raise ValueError("ArrivalModel.battery_capacity required for named policies")
    r = model.r
    name = policy.lower()
    if name == "ona":
        return _SchedulePolicy(ona_schedule(b, r, model.p, trunc)[0])
    if name == "sna":
        return _SchedulePolicy(sna_schedule(b, r, model.p, trunc))
    if name == "cp":
        return _SchedulePolicy(cp_schedule(b, r, model.p))
    if name == "oa":
        return _AdaptivePolicy(b, r, model.p, "OA", trunc)
    if name == "sa":
        return _AdaptivePolicy(b, r, model.p, "SA", trunc)
    if name == "offline":
        return _OfflinePolicy(b)
    if name in ("sb_opt", "single_optimal"):
        return _SingleOptimalPolicy(b, mean_rate(model))
    raise ValueError(f"unknown policy {policy!r}")


DUAL_POLICIES = ("ona", "sna", "cp", "oa", "sa", "offline", "dp")
SINGLE_POLICIES = ("sb_opt",)


class _ArrivalFeed:
    """Sequential view over the lazily sampled arrival stream."""

    def __init__(self, model: ArrivalModel, seed: int, user_index: int = 0):
        self.blocks = stream_blocks(model, seed, user_index)
        self.buffer = next(self.blocks)
        self.pos = 0

    def take(self) -> float:
        if self.pos >= len(self.buffer):
            self.buffer = next(self.blocks)
            self.pos = 0
        value = self.buffer[self.pos]
        self.pos += 1
        return float(value)

    def peek_fill_time(self, quantum: float, needed: int) -> int:
        """Slots until ``needed`` further arrivals occur (lookahead only)."""
        count = 0
        offset = 0
        buffer, pos = self.buffer, self.pos
        blocks_cache = []
        while True:
            while pos < len(buffer):
                offset += 1
                if buffer[pos] > 0:
                    count += 1
                    if count == needed:
                        # re-attach cached blocks so consumption is unchanged
                        self._reattach(blocks_cache)
                        return offset
                pos += 1
            nxt = next(self.blocks)
            blocks_cache.append(nxt)
            buffer, pos = nxt, 0

    def _reattach(self, blocks_cache) -> None:
        if blocks_cache:
            self.buffer = np.concatenate([self.buffer[self.pos :]] + blocks_cache)
            self.pos = 0


def simulate(
    policy,
    model: ArrivalModel,
    system: str,
    num_slots: int,
    seed: int,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
    warmup: bool = True,
) -> TraceStats:
    """Run ``policy`` for ``num_slots`` recorded slots and collect statistics.

    The trace starts in the renewal reference state (working battery full /
    single battery full) and discards one complete renewal period before
    recording.  Identical (policy, model, seed) arguments reproduce the
    trace bit for bit.
    """
    if num_slots < 10_000:
        raise ValueError("num_slots must be >= 10_000 for stable statistics")
    if system not in ("single", "dual"):
        raise ValueError("system must be 'single' or 'dual'")
    pol = _make_policy(policy, model, trunc)
    if pol.system != system:
        raise ValueError(
            f"policy targets the {pol.system}-battery system, not {system}"
        )
    if system == "single":
        return _simulate_single(pol, model, num_slots, seed, warmup)
    return _simulate_dual(pol, model, num_slots, seed, warmup)


def _simulate_dual(pol, model, num_slots, seed, warmup) -> TraceStats:
    b = model.battery_capacity
    r = model.r
    feed = _ArrivalFeed(model, seed)
    state = DualBatteryState(working_level=b, charging_level=0.0, capacity=b)
    lookahead = getattr(pol, "needs_lookahead", False)
    is_dp = isinstance(pol, _DpPolicy)

    def start_renewal():
        if lookahead:
            pol.begin_renewal_with_fill_time(feed.peek_fill_time(model.e_h, r))
        else:
            pol.begin_renewal(state.working_level)

    start_renewal()
    arrivals_seen = 0

    rewards = np.zeros(num_slots)
    idle = 0
    disc = np.zeros(3)  # overflow, leftover, halfduplex
    recorded = 0
    warm = warmup

    while recorded < num_slots:
        if is_dp:
            pol.working, pol.charging = state.working_level, state.charging_level
        request = pol.next_power()
        arrival = feed.take()
        state, outcome = step_dual(state, arrival, request, pol.discard_on_fill)
        if arrival > 0 and not outcome.renewal:
            arrivals_seen += 1
            if not (lookahead or is_dp):
                pol.notify_arrival(arrivals_seen, state.working_level)
        if outcome.renewal:
            arrivals_seen = 0
            start_renewal()
            if warm:
                warm = False
                continue
        if warm:
            continue
        rewards[recorded] = 0.5 * math.log2(1.0 + outcome.transmitted_power)
        if outcome.transmitted_power <= 0.0:
            idle += 1
        disc += (
            outcome.discarded_overflow,
            outcome.discarded_leftover,
            outcome.discarded_halfduplex,
        )
        recorded += 1
    return _finish(rewards, idle, disc, num_slots)


def _simulate_single(pol, model, num_slots, seed, warmup) -> TraceStats:
    capacity = 2.0 * model.battery_capacity
    feed = _ArrivalFeed(model, seed)
    state = SingleBatteryState(level=capacity, phase=Phase.DISCHARGING, capacity=capacity)

    rewards = np.zeros(num_slots)
    idle = 0
    disc = np.zeros(3)
    recorded = 0
    warm = warmup

    while recorded < num_slots:
        request = pol.power if state.phase is Phase.DISCHARGING else 0.0
        arrival = feed.take()
        state, outcome = step_single(state, arrival, request)
        if outcome.renewal and warm:
            warm = False
            continue
        if warm:
            continue
        rewards[recorded] = 0.5 * math.log2(1.0 + outcome.transmitted_power)
        if outcome.transmitted_power <= 0.0:
            idle += 1
        disc += (
            outcome.discarded_overflow,
            outcome.discarded_leftover,
            outcome.discarded_halfduplex,
        )
        recorded += 1
    return _finish(rewards, idle, disc, num_slots)


def _finish(rewards: np.ndarray, idle: int, disc: np.ndarray, n: int) -> TraceStats:
    batch = n // _NUM_BATCHES
    means = rewards[: batch * _NUM_BATCHES].reshape(_NUM_BATCHES, batch).mean(axis=1)
    ci = _T_STUDENT_29_975 * means.std(ddof=1) / math.sqrt(_NUM_BATCHES)
    return TraceStats(
        avg_throughput=float(rewards.mean()),
        idle_fraction=idle / n,
        discarded_per_slot=float(disc.sum() / n),
        num_slots=n,
        ci_halfwidth=float(ci),
        discarded_overflow_per_slot=float(disc[0] / n),
        discarded_leftover_per_slot=float(disc[1] / n),
        discarded_halfduplex_per_slot=float(disc[2] / n),
    )
