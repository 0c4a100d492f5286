"""Slot-level battery state machines for both storage architectures.

Single battery (capacity 2B): the cycle constraint forbids partial cycles,
so the state alternates between a charging phase (transmit power forced to
zero, level grows by min(level + arrival, 2B)) and a discharging phase
(arrivals dropped by the half-duplex constraint, level shrinks by the
transmitted power).  Phase flips happen exactly at full and at empty.

Dual battery (two units of capacity B): one battery works while the other
charges.  Roles switch only when the charging battery is full and the
working battery empty.  Two semantics for the moment the charging battery
fills are supported:

* ``discard_on_fill=True``  - non-adaptive policy semantics: any energy left
  in the working battery is discarded and the roles switch immediately, so
  renewals coincide with fill instants;
* ``discard_on_fill=False`` - dynamic-programming semantics: the charging
  battery clamps at B (further arrivals overflow) and the switch waits for
  the working battery to empty.

Within a slot the order is: transmit, credit the arrival, test the switch
condition.  All step functions are pure and return fresh state values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

__all__ = [
    "Phase",
    "SingleBatteryState",
    "DualBatteryState",
    "SlotOutcome",
    "step_single",
    "step_dual",
]

_LEVEL_EPS = 1e-9


class Phase(enum.Enum):
    CHARGING = "charging"
    DISCHARGING = "discharging"


@dataclass(frozen=True, slots=True)
class SingleBatteryState:
    """Level in [0, capacity] with the current phase; capacity is 2B."""

    level: float
    phase: Phase
    capacity: float

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        if not (-_LEVEL_EPS <= self.level <= self.capacity * (1 + _LEVEL_EPS)):
            raise ValueError(f"level {self.level} outside [0, {self.capacity}]")


@dataclass(frozen=True, slots=True)
class DualBatteryState:
    """Working/charging levels in [0, B]; ``alpha`` names the working unit.

    ``alpha`` is bookkeeping only: the dynamics are symmetric under
    relabelling, so (working, charging) is the canonical representation.
    """

    working_level: float
    charging_level: float
    capacity: float
    alpha: int = 1

    def __post_init__(self) -> None:
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")
        for name, level in (
            ("working_level", self.working_level),
            ("charging_level", self.charging_level),
        ):
            if not (-_LEVEL_EPS <= level <= self.capacity * (1 + _LEVEL_EPS)):
                raise ValueError(f"{name} {level} outside [0, {self.capacity}]")


@dataclass(frozen=True, slots=True)
class SlotOutcome:
    """What one slot did with energy.

    ``stored_energy`` is the part of the arrival banked into a battery.
    ``discarded_energy`` totals three separately tracked categories:
    arrival overflow at a full battery, leftover working energy dumped at a
    role switch, and arrivals dropped by the single-battery half-duplex
    constraint.  Conservation: stored + overflow + halfduplex = arrival
    (the leftover category drains the battery, not the arrival).
    """

    transmitted_power: float
    stored_energy: float
    discarded_energy: float
    renewal: bool
    discarded_overflow: float = 0.0
    discarded_leftover: float = 0.0
    discarded_halfduplex: float = 0.0


def step_single(
    state: SingleBatteryState, arrival: float, requested_power: float
) -> tuple[SingleBatteryState, SlotOutcome]:
    """Advance the single-battery system one slot.

    The renewal flag marks the slot whose end completes a charge to 2B
    (the reference state for renewal-reward accounting).
    """
    if requested_power < 0:
        raise ValueError("requested_power must be >= 0")
    cap = state.capacity
    if state.phase is Phase.CHARGING:
        raw = state.level + arrival
        new_level = min(raw, cap)
        overflow = raw - new_level
        stored = arrival - overflow
        full = new_level >= cap - _LEVEL_EPS * cap
        next_state = SingleBatteryState(
            level=cap if full else new_level,
            phase=Phase.DISCHARGING if full else Phase.CHARGING,
            capacity=cap,
        )
        outcome = SlotOutcome(
            transmitted_power=0.0,
            stored_energy=stored,
            discarded_energy=overflow,
            renewal=full,
            discarded_overflow=overflow,
        )
        return next_state, outcome

    transmitted = min(requested_power, state.level)
    new_level = state.level - transmitted
    if new_level <= _LEVEL_EPS * cap:
        new_level = 0.0
    empty = new_level == 0.0
    next_state = SingleBatteryState(
        level=new_level,
        phase=Phase.CHARGING if empty else Phase.DISCHARGING,
        capacity=cap,
    )
    outcome = SlotOutcome(
        transmitted_power=transmitted,
        stored_energy=0.0,
        discarded_energy=arrival,
        renewal=False,
        discarded_halfduplex=arrival,
    )
    return next_state, outcome


def step_dual(
    state: DualBatteryState,
    arrival: float,
    requested_power: float,
    discard_on_fill: bool,
) -> tuple[DualBatteryState, SlotOutcome]:
    """Advance the dual-battery system one slot; see the module docstring
    for the two fill semantics."""
    if requested_power < 0:
        raise ValueError("requested_power must be >= 0")
    cap = state.capacity

    transmitted = min(requested_power, state.working_level)
    working = state.working_level - transmitted
    if working <= _LEVEL_EPS * cap:
        working = 0.0

    raw = state.charging_level + arrival
    charging = min(raw, cap)
    overflow = raw - charging
    stored = arrival - overflow
    full = charging >= cap - _LEVEL_EPS * cap

    leftover = 0.0
    renewal = False
    if full and (discard_on_fill or working == 0.0):
        leftover = working if discard_on_fill else 0.0
        renewal = True
        working, charging = cap, 0.0
    elif full:
        charging = cap

    next_state = DualBatteryState(
        working_level=working,
        charging_level=charging,
        capacity=cap,
        alpha=1 - state.alpha if renewal else state.alpha,
    )
    outcome = SlotOutcome(
        transmitted_power=transmitted,
        stored_energy=stored,
        discarded_energy=overflow + leftover,
        renewal=renewal,
        discarded_overflow=overflow,
        discarded_leftover=leftover,
    )
    return next_state, outcome
