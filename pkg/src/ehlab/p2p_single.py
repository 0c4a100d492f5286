"""Closed-form policies for the single-battery point-to-point link.

With a battery of capacity 2B under the cycle constraint, a renewal period
is N transmission slots at constant power followed by a random recharge of
mean 2B/mu slots, so the long-term average throughput is

    T(N) = (N/2) log2(1 + 2B/N) / (N + 2B/mu).

Relaxing N to the reals gives the Lambert-W closed form

    P* = exp(1) exp(W0((mu-1)/e)) - 1,
    T* = mu / (2 ln2 exp(1) exp(W0((mu-1)/e))),

whose optimum depends only on the mean harvesting rate mu; the integer
optimum is then one of floor/ceil of 2B/P*.  The greedy baseline instead
harvests for part of every slot and transmits for the rest, which yields
the same Lambert-W form with e_h in place of mu and is strictly worse for
any p < 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .numerics import lambert_w0

__all__ = [
    "SingleBatterySolution",
    "GreedySolution",
    "solve_relaxed",
    "solve_integer",
    "solve_greedy",
    "integer_objective",
]

_LN2 = math.log(2.0)


@dataclass(frozen=True, slots=True)
class SingleBatterySolution:
    relaxed_power: float
    relaxed_throughput: float
    n_star: int
    integer_power: float
    integer_throughput: float


@dataclass(frozen=True, slots=True)
class GreedySolution:
    power: float
    tau: float
    throughput: float


def _exp_w_term(x: float) -> float:
    """exp(1 + W0((x-1)/e)); equals 1 + P* of the stationarity equation
    x + P - (1+P) ln(1+P) = 0."""
    return math.exp(1.0 + lambert_w0((x - 1.0) * math.exp(-1.0)))


def solve_relaxed(mu: float) -> tuple[float, float]:
    """Optimal constant power and throughput of the relaxed problem."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    ew = _exp_w_term(mu)
    power = ew - 1.0
    throughput = mu / (2.0 * _LN2 * ew)
    return power, throughput


def integer_objective(n: int, b: float, mu: float) -> float:
    """Throughput of transmitting 2b over n equal slots, then recharging."""
    return (n / 2.0) * math.log2(1.0 + 2.0 * b / n) / (n + 2.0 * b / mu)


def solve_integer(b: float, mu: float) -> SingleBatterySolution:
    """Round the relaxed slot count to the better of floor/ceil.

    The objective is unimodal in n, so only the two integers bracketing
    2b/P* can be optimal; ties break toward the smaller n (shorter
    transmission, earlier recharge).
    """
    if b <= 0:
        raise ValueError("b must be positive")
    power, relaxed_tp = solve_relaxed(mu)
    n_tilde = 2.0 * b / power
    lo = max(1, math.floor(n_tilde))
    hi = max(1, math.ceil(n_tilde))
    candidates = sorted({lo, hi})
    best_n = max(candidates, key=lambda n: (integer_objective(n, b, mu), -n))
    return SingleBatterySolution(
        relaxed_power=power,
        relaxed_throughput=relaxed_tp,
        n_star=best_n,
        integer_power=2.0 * b / best_n,
        integer_throughput=integer_objective(best_n, b, mu),
    )


def solve_greedy(p: float, e_h: float) -> GreedySolution:
    """Per-slot harvest-then-transmit baseline.

    The slot splits into a harvesting fraction 1 - tau and a transmitting
    fraction tau = e_h / (P* + e_h); the optimal P* solves the same
    stationarity equation as the relaxed problem but with e_h, not mu, so
    the greedy throughput degrades as arrivals get burstier.
    """
    if not (0.0 < p <= 1.0):
        raise ValueError("p must lie in (0, 1]")
    if e_h <= 0:
        raise ValueError("e_h must be positive")
    ew = _exp_w_term(e_h)
    power = ew - 1.0
    tau = e_h / (power + e_h)
    throughput = p * e_h / (2.0 * _LN2 * ew)
    return GreedySolution(power=power, tau=tau, throughput=throughput)
