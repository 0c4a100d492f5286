"""Multiple-access throughput regions for batteries with cycle constraints.

All rate vectors live in the Gaussian-MAC polymatroid

    sum_{u in S} R_u <= f(S) = 0.5 log2(1 + sum_{u in S} P_u),   S subset of users,

whose corners are successive-decoding orders.  Four objects are computed:

* ``outer_bound``       - the unconstrained region, f evaluated at the mean
                          harvesting rates mu_u;
* ``inner_bound_dual``  - the analytic inner region obtained when every user
                          runs its proportional schedule, shrinking each
                          constraint by the worst-case gap min_u G(r_u);
* ``sb_boundary_point`` - single-battery achievable boundary: each user
                          transmits at constant power P_u for a fraction
                          mu_u/(mu_u+P_u) of the time, giving the sum-of-
                          ratios objective  sum lambda_u mu_u R_u/(mu_u+P_u),
                          solved by quadratic-transform alternate
                          maximisation (surrogate 2y*sqrt(A) - y^2*B) with a
                          convex inner step;
* ``db_boundary_point`` - dual-battery achievable boundary: per-slot rates
                          and powers after a renewal maximise
                          sum_i sum_u (lambda_u p_u/r_u) Fbar_u(i-1) R_ui
                          under per-user energy budgets; solved by dual
                          decomposition on the budgets, each multiplier
                          found by bisection, the per-slot subproblems by a
                          pool-adjacent-violators waterfill on cumulative
                          powers.

The quadratic-transform iteration converges monotonically to a stationary
point of the (nonconvex) sum of ratios; from the symmetric feasible start
used here it reproduces the reference symmetric operating points.  The
dual-battery problem is jointly convex, so its solution is a true optimum.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations, permutations

import numpy as np

from .arrivals import ArrivalModel, mean_rate
from .errors import SolverError
from .numerics import (
    DEFAULT_TRUNCATION,
    FillTimeLaw,
    TruncationConfig,
    fill_time_ccdf_table,
    gap_bound_g,
    throughput_upper_bound,
)
from .p2p_dual import ona_schedule

__all__ = [
    "MacInstance",
    "BoundaryPoint",
    "RegionBoundary",
    "outer_bound",
    "inner_bound_dual",
    "weighted_rate_greedy",
    "sb_boundary_point",
    "db_boundary_point",
    "region_sweep",
    "sum_throughput_vs_users",
]

_HALF_LN2 = 0.5 / math.log(2.0)  # d/dP of 0.5*log2(1+P) at P=0


@dataclass(frozen=True)
class MacInstance:
    """Per-user arrival models; every model needs its battery capacity."""

    users: tuple[ArrivalModel, ...]

    def __init__(self, users):
        object.__setattr__(self, "users", tuple(users))
        if not self.users:
            raise ValueError("need at least one user")
        for m in self.users:
            if m.battery_capacity is None:
                raise ValueError("every user model needs battery_capacity")

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def mean_rates(self) -> np.ndarray:
        return np.array([mean_rate(m) for m in self.users])


@dataclass(frozen=True)
class BoundaryPoint:
    weights: tuple[float, ...]
    throughputs: tuple[float, ...]
    rates: tuple
    powers: tuple
    converged: bool
    iterations: int
    objective: float


@dataclass(frozen=True)
class RegionBoundary:
    points: tuple[BoundaryPoint, ...]
    sweep_resolution: int
    failures: tuple[str, ...] = field(default_factory=tuple)

    def support(self, weights) -> float:
        """Largest weighted throughput among swept points."""
        w = np.asarray(weights)
        return max(float(w @ np.asarray(pt.throughputs)) for pt in self.points)


def _subsets(num_users: int):
    for size in range(1, num_users + 1):
        yield from combinations(range(num_users), size)


def outer_bound(instance: MacInstance) -> dict[tuple[int, ...], float]:
    """c_S = 0.5 log2(1 + sum_{u in S} mu_u) for every nonempty subset."""
    mu = instance.mean_rates
    return {s: throughput_upper_bound(float(mu[list(s)].sum())) for s in _subsets(instance.num_users)}


def inner_bound_dual(instance: MacInstance) -> dict[tuple[int, ...], float]:
    """Outer-bound constraints shrunk by the smallest per-user gap G(r_u),
    clipped at zero."""
    mu = instance.mean_rates
    g_min = min(gap_bound_g(m.r) for m in instance.users)
    bound = {}
    for s in _subsets(instance.num_users):
        arg = 1.0 + float(mu[list(s)].sum()) - g_min
        bound[s] = max(0.0, 0.5 * math.log2(arg)) if arg > 0 else 0.0
    return bound


def polymatroid_feasible(rates, powers, slack: float = 1e-9) -> bool:
    """Check every subset constraint sum R_S <= 0.5 log2(1 + sum P_S)."""
    rates = np.asarray(rates, dtype=float)
    powers = np.asarray(powers, dtype=float)
    for s in _subsets(len(rates)):
        idx = list(s)
        if rates[idx].sum() > throughput_upper_bound(float(powers[idx].sum())) + slack:
            return False
    return True


# ---------------------------------------------------------------------------
# Polymatroid rate allocation
# ---------------------------------------------------------------------------


def _rank(powers: np.ndarray, subset) -> float:
    return throughput_upper_bound(float(powers[list(subset)].sum()))


def _greedy_corner(weights: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """Linear objective: successive-decoding corner, heaviest user decoded
    last (clean channel); rank increments along the weight-sorted chain."""
    order = np.argsort(-weights, kind="stable")
    rates = np.zeros_like(weights, dtype=float)
    cum_power = 0.0
    prev_rank = 0.0
    for u in order:
        cum_power += powers[u]
        rank = throughput_upper_bound(cum_power)
        rates[u] = rank - prev_rank
        prev_rank = rank
    return rates


def _capped_waterfill(weight: np.ndarray, total: float, caps: np.ndarray) -> np.ndarray:
    """Split ``total`` proportionally to ``weight`` subject to per-entry
    caps: the water-level solution of max sum w_u sqrt(x_u), sum x = total,
    x <= caps.  Entries hitting their cap stay capped."""
    n = len(weight)
    split = np.zeros(n)
    capped = np.zeros(n, dtype=bool)
    remaining = total
    for _ in range(n + 1):
        free = ~capped
        w_free = weight[free].sum()
        if w_free <= 0 or remaining <= 0:
            break
        alloc = np.zeros(n)
        alloc[free] = remaining * weight[free] / w_free
        over = free & (alloc > caps + 1e-15)
        if not over.any():
            split[free] = alloc[free]
            break
        split[over] = caps[over]
        capped |= over
        remaining = total - split[capped].sum()
    return split


def _sqrt_allocation(coeffs: np.ndarray, powers: np.ndarray, users: list[int]) -> np.ndarray:
    """Maximise sum c_u sqrt(R_u) over the power polymatroid.

    Water-level split on the dominant face with singleton caps; if an
    interior subset constraint is violated the most violated subset must be
    tight at the optimum, so the problem splits into that subset and its
    contraction (standard divide and conquer for separable concave
    maximisation over a polymatroid)."""
    rates = np.zeros(len(coeffs))

    def solve(group: tuple[int, ...], base: tuple[int, ...]):
        if not group:
            return
        base_rank = _rank(powers, base) if base else 0.0
        total = _rank(powers, list(base) + list(group)) - base_rank
        weight = coeffs[list(group)] ** 2
        if total <= 0 or weight.sum() <= 0:
            return
        caps = np.array([_rank(powers, list(base) + [u]) - base_rank for u in group])
        split = _capped_waterfill(weight, total, caps)
        for i, u in enumerate(group):
            rates[u] = split[i]
        if len(group) <= 2:
            return
        worst, worst_gap = None, 1e-12
        for s in _subsets(len(group)):
            if len(s) == len(group):
                continue
            subset = [group[i] for i in s]
            gap = rates[subset].sum() - (_rank(powers, list(base) + subset) - base_rank)
            if gap > worst_gap:
                worst, worst_gap = tuple(subset), gap
        if worst is not None:
            rest = tuple(u for u in group if u not in worst)
            solve(worst, base)
            solve(rest, tuple(base) + worst)

    solve(tuple(users), ())
    return rates


def weighted_rate_greedy(
    weights, powers, objective: str = "linear", coeffs=None
) -> np.ndarray:
    """Rates maximising a weighted objective over the power polymatroid.

    ``objective="linear"`` maximises sum w_u R_u: the polymatroid corner in
    decreasing-weight order (ties keep input order).  ``objective="sqrt"``
    maximises sum c_u sqrt(R_u) (c = ``coeffs`` or ``weights``): the unique
    split found by water-level search; the chain of tight constraints always
    includes the full set (the objective is increasing in every rate).
    """
    weights = np.asarray(weights, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if weights.shape != powers.shape:
        raise ValueError("weights and powers must have matching shapes")
    if np.any(weights < 0) or np.any(powers < 0):
        raise ValueError("weights and powers must be nonnegative")
    if objective == "linear":
        return _greedy_corner(weights, powers)
    if objective == "sqrt":
        c = weights if coeffs is None else np.asarray(coeffs, dtype=float)
        return _sqrt_allocation(c, powers, list(range(len(weights))))
    raise ValueError(f"unknown objective {objective!r}")


# ---------------------------------------------------------------------------
# Single-battery boundary: quadratic-transform alternate maximisation
# ---------------------------------------------------------------------------


def _surrogate_value(y, lam, mu, rates, powers) -> float:
    return float(
        np.sum(2.0 * y * np.sqrt(lam * mu * rates) - y**2 * (mu + powers))
    )


def _exchangeable_groups(lam: np.ndarray, mu: np.ndarray) -> list[list[int]]:
    groups: dict[tuple[float, float], list[int]] = {}
    for u in range(len(lam)):
        groups.setdefault((round(lam[u], 12), round(mu[u], 12)), []).append(u)
    return [g for g in groups.values() if len(g) > 1]


def _min_cost_cover(costs: np.ndarray, rates: np.ndarray) -> np.ndarray:
    """min sum costs_u P_u  s.t.  sum_{u in S} P_u >= 2^(2 R_S) - 1.

    The constraint set is a contra-polymatroid (the requirement function is
    supermodular), so the optimum is a permutation corner; all orders are
    enumerated (U here is small) and the cheapest feasible corner returned.
    """
    n = len(costs)
    if n <= 3:
        orders = permutations(range(n))
    else:
        # Supermodular increments grow along the order, so cheap users go
        # last; exact for tied costs, near-optimal otherwise.
        orders = [tuple(np.argsort(-costs, kind="stable"))]
    best, best_cost = None, math.inf
    for order in orders:
        p = np.zeros(n)
        cum_rate = 0.0
        prev_req = 0.0
        for u in order:
            cum_rate += rates[u]
            req = 2.0 ** (2.0 * cum_rate) - 1.0
            p[u] = req - prev_req
            prev_req = req
        cost = float(costs @ p)
        if cost < best_cost - 1e-15:
            best, best_cost = p, cost
    return best


def sb_boundary_point(
    instance: MacInstance,
    weights,
    tol: float = 1e-9,
    max_iterations: int = 500,
) -> BoundaryPoint:
    """One boundary point of the single-battery region for weight vector
    ``weights`` (nonnegative, summing to 1).

    Alternate maximisation: Step 1 sets y_u* = sqrt(lambda_u mu_u R_u) /
    (mu_u + P_u) in closed form; Step 2 maximises the quadratic surrogate
    over the polymatroid-constrained (R, P).  Step 2 is solved by searching
    the concave value function h(P) = max_R sum 2 y_u sqrt(lambda_u mu_u
    R_u) - sum y_u^2 P_u, with the inner rate split delegated to
    ``weighted_rate_greedy`` (sqrt objective) and the powers polished by the
    minimum-cost covering corner.  The surrogate value never decreases; a
    decrease beyond rounding noise raises ``SolverError``.
    """
    lam_full = np.asarray(weights, dtype=float)
    if lam_full.shape != (instance.num_users,):
        raise ValueError("one weight per user required")
    if np.any(lam_full < 0):
        raise ValueError("weights must be nonnegative")
    mu_full = instance.mean_rates
    active = [u for u in range(instance.num_users) if lam_full[u] > 0]
    if not active:
        raise ValueError("at least one positive weight required")
    lam = lam_full[active]
    mu = mu_full[active]
    n = len(active)

    powers = mu.copy()
    coeffs = np.sqrt(lam * mu)
    rates = weighted_rate_greedy(np.ones(n), powers, "sqrt", coeffs=coeffs)

    def h_value(p_vec, y, c):
        if n == 2:
            # Closed form: split the sum capacity in proportion to c^2,
            # clipped at the singleton caps (feasible by submodularity).
            p0, p1 = float(p_vec[0]), float(p_vec[1])
            total = 0.5 * math.log2(1.0 + p0 + p1)
            cap0 = 0.5 * math.log2(1.0 + p0)
            cap1 = 0.5 * math.log2(1.0 + p1)
            w0, w1 = c[0] * c[0], c[1] * c[1]
            if w0 + w1 <= 0.0:
                r0 = r1 = 0.0
            else:
                r0 = total * w0 / (w0 + w1)
                r1 = total - r0
                if r0 > cap0:
                    r0, r1 = cap0, total - cap0
                elif r1 > cap1:
                    r1, r0 = cap1, total - cap1
            val = (
                c[0] * math.sqrt(r0)
                + c[1] * math.sqrt(r1)
                - y[0] * y[0] * p0
                - y[1] * y[1] * p1
            )
            return val, np.array([r0, r1])
        r_vec = weighted_rate_greedy(np.ones(n), p_vec, "sqrt", coeffs=c)
        return float(c @ np.sqrt(r_vec) - (y**2) @ p_vec), r_vec

    last = -math.inf
    iterations = 0
    converged = False
    for iterations in range(1, max_iterations + 1):
        y = np.sqrt(lam * mu * rates) / (mu + powers)
        value = _surrogate_value(y, lam, mu, rates, powers)
        if value < last - 1e-9 * max(1.0, abs(last)):
            raise SolverError(
                f"surrogate objective decreased: {last:.12f} -> {value:.12f}"
            )
        if iterations > 1 and value - last < tol:
            last = value
            converged = True
            break
        last = value

        c = 2.0 * y * np.sqrt(lam * mu)
        invphi = (math.sqrt(5.0) - 1.0) / 2.0

        def golden(fun, lo, hi, rel_tol=1e-9):
            while fun(2.0 * hi) > fun(hi):
                hi *= 2.0
            x1 = hi - invphi * (hi - lo)
            x2 = lo + invphi * (hi - lo)
            f1, f2 = fun(x1), fun(x2)
            while hi - lo > rel_tol * (1.0 + hi):
                if f1 < f2:
                    lo, x1, f1 = x1, x2, f2
                    x2 = lo + invphi * (hi - lo)
                    f2 = fun(x2)
                else:
                    hi, x2, f2 = x2, x1, f1
                    x1 = hi - invphi * (hi - lo)
                    f1 = fun(x1)
            return 0.5 * (lo + hi)

        groups = _exchangeable_groups(lam, mu)
        fully_exchangeable = groups and len(groups[0]) == n and np.allclose(y, y[0])
        if fully_exchangeable:
            # The symmetric maximiser reduces Step 2 to a scalar search
            # over the common power level (rates split equally).
            c_sum = float(c.sum())
            ysq = float(y[0] ** 2) * n

            def h_scalar(p_common: float) -> float:
                r_each = throughput_upper_bound(n * p_common) / n
                return c_sum * math.sqrt(r_each) - ysq * p_common

            p_common = golden(h_scalar, 0.0, 4.0 * (1.0 + mu.sum()), 1e-10)
            powers = np.full(n, p_common)
            rates = np.full(n, throughput_upper_bound(n * p_common) / n)
        else:
            # Coordinate golden-section ascent on the concave h(P).
            for _ in range(40):
                moved = 0.0
                for u in range(n):
                    if c[u] <= 0 and y[u] <= 0:
                        powers[u] = 0.0
                        continue
                    pv = powers.copy()

                    def h_coord(x: float) -> float:
                        pv[u] = x
                        return h_value(pv, y, c)[0]

                    new_p = golden(
                        h_coord, 0.0, max(4.0 * (1.0 + mu.sum()), 2.0 * powers[u] + 1.0)
                    )
                    moved = max(moved, abs(new_p - powers[u]))
                    powers[u] = new_p
                if moved < 1e-8 * (1.0 + powers.max(initial=1.0)):
                    break
            rates = weighted_rate_greedy(np.ones(n), powers, "sqrt", coeffs=c)
            # Trim slack: cheapest covering corner for the achieved rates.
            trimmed = _min_cost_cover(np.maximum(y**2, 1e-30), rates)
            if trimmed is not None and float(
                (y**2) @ trimmed
            ) <= float((y**2) @ powers) + 1e-12:
                powers = np.maximum(trimmed, 0.0)
            # Exchangeable users (equal weight and mean rate) admit a
            # symmetric surrogate maximiser: the surrogate is concave and
            # the covering constraints linear in P, so averaging powers
            # across such a group (and re-splitting rates) never lowers the
            # surrogate.  Keeping the canonical symmetric point makes the
            # iteration order-independent.
            if groups:
                sym = powers.copy()
                for group in groups:
                    sym[group] = sym[group].mean()
                sym_rates = weighted_rate_greedy(np.ones(n), sym, "sqrt", coeffs=c)
                cur = h_value(powers, y, c)[0]
                if h_value(sym, y, c)[0] >= cur - 1e-9 * max(1.0, abs(cur)):
                    powers, rates = sym, sym_rates

    tps = mu * rates / (mu + powers)
    full = np.zeros(instance.num_users)
    full_r = np.zeros(instance.num_users)
    full_p = np.zeros(instance.num_users)
    full[active] = tps
    full_r[active] = rates
    full_p[active] = powers
    return BoundaryPoint(
        weights=tuple(float(x) for x in lam_full),
        throughputs=tuple(float(x) for x in full),
        rates=tuple(float(x) for x in full_r),
        powers=tuple(float(x) for x in full_p),
        converged=converged,
        iterations=iterations,
        objective=float(lam_full[active] @ tps),
    )


# ---------------------------------------------------------------------------
# Dual-battery boundary: dual decomposition over per-user energy budgets
# ---------------------------------------------------------------------------


def _slot_weights(instance: MacInstance, lam: np.ndarray, horizon: int, trunc) -> np.ndarray:
    """w[u, i] = lambda_u p_u / r_u * Fbar_u(i-1) for slots i = 1..horizon."""
    w = np.zeros((instance.num_users, horizon))
    for u, m in enumerate(instance.users):
        law = FillTimeLaw(m.r, m.p)
        fbar = fill_time_ccdf_table(law, trunc, i_max=horizon - 1)
        w[u] = lam[u] * m.p / m.r * fbar[:horizon]
    return w


def _slot_allocation(w_slot: np.ndarray, nu: np.ndarray):
    """Per-slot maximiser of sum_u w_u R_u - nu_u P_u over the polymatroid.

    In decode order (weights descending, price ascending among ties) the
    objective telescopes to sum_k (w_k - w_{k+1}) f(Q_k) - sum (nu_k -
    nu_{k+1}) Q_k over cumulative powers Q_1 <= ... <= Q_U; each block of a
    pool-adjacent-violators pass has the waterfill solution Q = max(0,
    sum(dW)/sum(dnu) - 1) with dW in nat units.
    """
    n = len(nu)
    order = sorted(range(n), key=lambda u: (-w_slot[u], nu[u]))
    w_sorted = w_slot[order]
    nu_sorted = nu[order]
    d_w = _HALF_LN2 * (w_sorted - np.append(w_sorted[1:], 0.0))  # >= 0
    d_nu = nu_sorted - np.append(nu_sorted[1:], 0.0)

    # PAV on blocks (sum_dw, sum_dnu, q): q must be nondecreasing along k.
    blocks: list[list[float]] = []

    def q_of(sdw: float, sdnu: float) -> float:
        if sdnu <= 0.0:
            return math.inf
        return max(0.0, sdw / sdnu - 1.0)

    for k in range(n):
        blocks.append([d_w[k], d_nu[k], q_of(d_w[k], d_nu[k]), 1])
        while len(blocks) > 1 and blocks[-2][2] >= blocks[-1][2]:
            sdw = blocks[-2][0] + blocks[-1][0]
            sdnu = blocks[-2][1] + blocks[-1][1]
            count = blocks[-2][3] + blocks[-1][3]
            blocks.pop()
            blocks[-1] = [sdw, sdnu, q_of(sdw, sdnu), count]
    q_levels = np.empty(n)
    pos = 0
    for sdw, sdnu, q, count in blocks:
        q_levels[pos : pos + count] = q
        pos += count
    if not np.isfinite(q_levels[-1]):
        raise SolverError("unbounded per-slot subproblem (zero price)")

    powers = np.zeros(n)
    rates = np.zeros(n)
    prev_q = 0.0
    prev_f = 0.0
    for k in range(n):
        q = q_levels[k]
        f = throughput_upper_bound(q)
        powers[order[k]] = q - prev_q
        rates[order[k]] = f - prev_f
        prev_q, prev_f = q, f
    return powers, rates


def _two_user_allocation(w: np.ndarray, nu: np.ndarray):
    """Vectorised form of ``_slot_allocation`` for two users: the PAV pass
    over two blocks reduces to comparing the two candidate water levels.
    Returns (powers, rates) arrays of shape (2, horizon)."""
    order_first = (w[0] > w[1]) | ((w[0] == w[1]) & (nu[0] <= nu[1]))
    wa = np.where(order_first, w[0], w[1])
    wb = np.where(order_first, w[1], w[0])
    nua = np.where(order_first, nu[0], nu[1])
    nub = np.where(order_first, nu[1], nu[0])

    with np.errstate(divide="ignore", invalid="ignore"):
        qa_hat = np.where(
            nua > nub,
            np.maximum(_HALF_LN2 * (wa - wb) / (nua - nub) - 1.0, 0.0),
            np.inf,
        )
    qb_hat = np.maximum(_HALF_LN2 * wb / nub - 1.0, 0.0)
    merge = qa_hat >= qb_hat
    q1 = np.where(merge, np.maximum(_HALF_LN2 * wa / nua - 1.0, 0.0), qa_hat)
    q2 = np.where(merge, q1, qb_hat)
    f1 = 0.5 * np.log2(1.0 + q1)
    f2 = 0.5 * np.log2(1.0 + q2)
    pa, pb = q1, q2 - q1
    ra, rb = f1, f2 - f1
    powers = np.where(order_first, pa, pb), np.where(order_first, pb, pa)
    rates = np.where(order_first, ra, rb), np.where(order_first, rb, ra)
    return np.stack(powers), np.stack(rates)


def _db_identical_uniform(instance: MacInstance, trunc) -> tuple[np.ndarray, np.ndarray]:
    """Identical users + uniform weights: the per-slot optimum is symmetric,
    so cumulative powers solve the single-user waterfilling with budget
    U*B; reuse the exact schedule construction."""
    m = instance.users[0]
    u_count = instance.num_users
    schedule, _ = ona_schedule(u_count * m.battery_capacity, m.r, m.p, trunc)
    q = schedule.powers
    total_rates = 0.5 * np.log2(1.0 + q)
    powers = np.tile(q / u_count, (u_count, 1))
    rates = np.tile(total_rates / u_count, (u_count, 1))
    return powers, rates


def db_boundary_point(
    instance: MacInstance,
    weights,
    horizon: int | None = None,
    tol: float = 1e-8,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
    max_rounds: int = 60,
) -> BoundaryPoint:
    """One boundary point of the dual-battery region.

    Dual decomposition: for prices nu_u on the per-user energy budgets the
    slots decouple into polymatroid subproblems solved by ``_slot_allocation``;
    each price is then bisected to meet its budget (Gauss-Seidel over
    users).  Weight ties make per-slot allocations degenerate (any split of
    the tied block is optimal), so a final repair pass shifts tied-slot
    power between tied users to zero out the remaining budget gaps without
    changing the objective.
    """
    lam_full = np.asarray(weights, dtype=float)
    if lam_full.shape != (instance.num_users,):
        raise ValueError("one weight per user required")
    if np.any(lam_full < 0) or lam_full.sum() <= 0:
        raise ValueError("weights must be nonnegative, not all zero")
    budgets_full = np.array([m.battery_capacity for m in instance.users])
    active = [u for u in range(instance.num_users) if lam_full[u] > 0]
    lam = lam_full[active]
    sub = MacInstance([instance.users[u] for u in active])
    budgets = budgets_full[active]
    n = len(active)

    if horizon is None:
        horizon = max(trunc.n_max(FillTimeLaw(m.r, m.p)) for m in sub.users)
    w = _slot_weights(sub, lam, horizon, trunc)

    identical = n > 0 and all(m == sub.users[0] for m in sub.users)
    uniform = np.allclose(lam, lam[0])
    if identical and uniform and lam[0] > 0:
        powers, rates = _db_identical_uniform(sub, trunc)
        if powers.shape[1] < horizon:
            pad = horizon - powers.shape[1]
            powers = np.pad(powers, ((0, 0), (0, pad)))
            rates = np.pad(rates, ((0, 0), (0, pad)))
        iterations = 1
        residual = 0.0
    else:
        nu = np.array(
            [max(_HALF_LN2 * w[u].max() / (1.0 + budgets[u]), 1e-8) for u in range(n)]
        )
        powers = np.zeros((n, horizon))
        rates = np.zeros((n, horizon))

        def usage(prices: np.ndarray) -> np.ndarray:
            nonlocal powers, rates
            if n == 2:
                powers, rates = _two_user_allocation(w, prices)
            else:
                for i in range(horizon):
                    p_i, r_i = _slot_allocation(w[:, i], prices)
                    powers[:, i] = p_i
                    rates[:, i] = r_i
            return powers.sum(axis=1)

        iterations = 0
        residual = math.inf
        for _ in range(max_rounds):
            iterations += 1
            for u in range(n):
                lo, hi = 1e-14, _HALF_LN2 * float(w[u].max()) + 1.0
                for _ in range(64):
                    mid = math.sqrt(lo * hi)
                    nu[u] = mid
                    used = usage(nu)[u]
                    if used > budgets[u]:
                        lo = mid
                    else:
                        hi = mid
                nu[u] = hi  # feasible side: usage <= budget
            used = usage(nu)
            residual = float(np.max(np.abs(used - budgets) / np.maximum(budgets, 1.0)))
            if residual <= 1e-6:
                break
        if residual > 1e-6:
            _repair_budget_ties(w, nu, powers, rates, budgets)
            residual = float(
                np.max(np.abs(powers.sum(axis=1) - budgets) / np.maximum(budgets, 1.0))
            )
        if residual > 1e-4:
            raise SolverError(
                f"dual decomposition left budget residual {residual:.3e}"
            )

    tps = np.array(
        [
            float(np.sum(w[u] / lam[u] * rates[u])) if lam[u] > 0 else 0.0
            for u in range(n)
        ]
    )
    full_t = np.zeros(instance.num_users)
    full_t[active] = tps
    full_rates = [tuple() for _ in range(instance.num_users)]
    full_powers = [tuple() for _ in range(instance.num_users)]
    for j, u in enumerate(active):
        full_rates[u] = tuple(rates[j])
        full_powers[u] = tuple(powers[j])
    return BoundaryPoint(
        weights=tuple(float(x) for x in lam_full),
        throughputs=tuple(float(x) for x in full_t),
        rates=tuple(full_rates),
        powers=tuple(full_powers),
        converged=True,
        iterations=iterations,
        objective=float(lam_full @ full_t),
    )


def _repair_budget_ties(w, nu, powers, rates, budgets, tie_tol: float = 1e-11):
    """Move power between weight-tied users inside single slots to close
    budget gaps; objective-neutral because tied users share a weight."""
    n, horizon = powers.shape
    gaps = budgets - powers.sum(axis=1)
    for i in range(horizon):
        order = np.argsort(-w[:, i])
        for a_idx in range(n - 1):
            a, b = order[a_idx], order[a_idx + 1]
            if abs(w[a, i] - w[b, i]) > tie_tol * max(1.0, w[a, i]):
                continue
            for src, dst in ((a, b), (b, a)):
                transferable = min(powers[src, i], max(gaps[dst], 0.0), -min(gaps[src], 0.0))
                if transferable <= 0:
                    continue
                base = powers[src, i] + powers[dst, i]
                rate_pool = rates[src, i] + rates[dst, i]
                powers[src, i] -= transferable
                powers[dst, i] += transferable
                # Corner split: dst decoded first within the tied pair.
                r_src = throughput_upper_bound(powers[src, i])
                rates[src, i] = min(r_src, rate_pool)
                rates[dst, i] = rate_pool - rates[src, i]
                gaps[src] += transferable
                gaps[dst] -= transferable


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def _simplex_grid(num_users: int, resolution: int, floor: float = 1e-3) -> list[tuple]:
    if num_users == 1:
        return [(1.0,)]
    if num_users == 2:
        values = np.linspace(0.0, 1.0, resolution)
        out = []
        for v in values:
            lam = np.clip(np.array([v, 1.0 - v]), floor, None)
            out.append(tuple(lam / lam.sum()))
        return out
    base = []
    for combo in combinations(range(resolution + num_users - 2), num_users - 1):
        parts = []
        prev = -1
        for c in list(combo) + [resolution + num_users - 2]:
            parts.append(c - prev - 1)
            prev = c
        lam = np.clip(np.array(parts, dtype=float) / max(resolution - 1, 1), floor, None)
        base.append(tuple(lam / lam.sum()))
    return base


def _max_threads() -> int:
    env = os.environ.get("EHLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return min(8, os.cpu_count() or 1)


def region_sweep(
    instance: MacInstance,
    case: str,
    resolution: int = 49,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
) -> RegionBoundary:
    """Sweep the weight simplex and solve one boundary point per weight.

    ``case`` is "single" or "dual".  Points run concurrently (bounded by
    EHLAB_THREADS); per-point solver failures are collected, not raised.
    """
    if resolution < 3:
        raise ValueError("resolution must be >= 3")
    if case not in ("single", "dual"):
        raise ValueError("case must be 'single' or 'dual'")
    grid = _simplex_grid(instance.num_users, resolution)

    def solve(lam):
        try:
            if case == "single":
                return sb_boundary_point(instance, lam), None
            return db_boundary_point(instance, lam, trunc=trunc), None
        except SolverError as exc:
            return None, f"weights {lam}: {exc}"

    threads = _max_threads()
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(solve, grid))
    else:
        results = [solve(lam) for lam in grid]
    points = tuple(pt for pt, err in results if pt is not None)
    failures = tuple(err for _, err in results if err is not None)
    return RegionBoundary(points=points, sweep_resolution=resolution, failures=failures)


def sum_throughput_vs_users(
    base_model: ArrivalModel,
    case: str,
    u_max: int,
    trunc: TruncationConfig = DEFAULT_TRUNCATION,
) -> list[float]:
    """Maximum sum throughput at uniform weights for U = 1..u_max identical
    users; ``case`` in {"single", "dual", "upper"}."""
    if u_max < 1:
        raise ValueError("u_max must be >= 1")
    out = []
    mu = mean_rate(base_model)
    for u_count in range(1, u_max + 1):
        if case == "upper":
            out.append(throughput_upper_bound(u_count * mu))
            continue
        instance = MacInstance([base_model] * u_count)
        lam = tuple(1.0 / u_count for _ in range(u_count))
        if case == "single":
            point = sb_boundary_point(instance, lam)
        elif case == "dual":
            point = db_boundary_point(instance, lam, trunc=trunc)
        else:
            raise ValueError("case must be 'single', 'dual' or 'upper'")
        out.append(float(sum(point.throughputs)))
    return out
