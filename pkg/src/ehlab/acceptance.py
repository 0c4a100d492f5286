"""Acceptance gate: one callable check per release criterion.

Every criterion pins reference values with explicit tolerances and reports
a pass/fail verdict plus scalar details; ``run_acceptance`` executes them
in order and the CLI / test suite render the results.

Two sub-checks are known-red and kept faithful rather than loosened (see
README, "known discrepancies"): the gap-bound reference points at r=2 and
r=4, and the asymmetric two-user dual-battery marker.  For all three the
implementation's value has been cross-validated against independent
oracles (closed forms, brute-force maximisation, an interior-point convex
solver); the reference figure values are not optima of the quantities they
are labelled with.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .arrivals import ArrivalModel
from .mac import (
    MacInstance,
    db_boundary_point,
    outer_bound,
    region_sweep,
    sb_boundary_point,
    sum_throughput_vs_users,
)
from .numerics import gap_bound_g, throughput_upper_bound
from .p2p_dual import (
    cp_schedule,
    offline_throughput,
    ona_schedule,
    sandwich_bounds,
    sna_schedule,
    solve_dp,
)
from .p2p_single import solve_greedy, solve_integer, solve_relaxed
from .simulator import analytic_renewal_throughput, simulate

__all__ = ["CheckResult", "run_acceptance", "CRITERIA"]


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: list[str] = field(default_factory=list)
    duration: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name}  [{self.duration:.1f}s]"


class _Check:
    """Collects sub-assertions for one criterion."""

    def __init__(self) -> None:
        self.passed = True
        self.details: list[str] = []

    def close(self, name: str, value: float, target: float, tol: float) -> None:
        ok = abs(value - target) <= tol
        self.passed &= ok
        self.details.append(
            f"{'ok' if ok else 'FAIL'}: {name} = {value:.6g} (target {target:.6g} +- {tol:g})"
        )

    def holds(self, name: str, condition: bool, note: str = "") -> None:
        self.passed &= bool(condition)
        self.details.append(f"{'ok' if condition else 'FAIL'}: {name}{' ' + note if note else ''}")


def _c01_closed_forms(quick: bool) -> _Check:
    c = _Check()
    for mu, target in ((1.0, 0.26536), (2.5, 0.45454)):
        power, tp = solve_relaxed(mu)
        c.close(f"relaxed throughput at mu={mu}", tp, target, 1e-4)
        residual = abs(mu + power - (1.0 + power) * math.log1p(power))
        c.holds(
            f"stationarity residual at mu={mu}",
            residual <= 1e-9,
            f"(residual {residual:.2e})",
        )
    return c


def _c02_greedy_strictly_worse(quick: bool) -> _Check:
    c = _Check()
    worst = math.inf
    for p in np.linspace(0.05, 0.95, 20):
        for e_h in np.linspace(0.2, 20.0, 20):
            margin = solve_relaxed(p * e_h)[1] - solve_greedy(p, e_h).throughput
            worst = min(worst, margin)
    c.holds(
        "greedy < relaxed on the 20x20 (p, e_h) grid",
        worst > 0,
        f"(smallest margin {worst:.3e})",
    )
    return c


def _c03_gap_bound(quick: bool) -> _Check:
    c = _Check()
    c.close("G(1)", gap_bound_g(1), 0.721, 2e-3)
    c.close("G(2)", gap_bound_g(2), 0.492, 2e-3)
    c.close("G(4)", gap_bound_g(4), 0.3455, 2e-3)
    r_top = 8 if quick else 32
    gs = [gap_bound_g(r) for r in range(1, r_top + 1)]
    c.holds(
        f"G(r) <= G(1) for r <= {r_top}",
        all(g <= gs[0] + 1e-12 for g in gs),
    )
    return c


def _c04_throughput_vs_capacity(quick: bool) -> _Check:
    c = _Check()
    p = 0.5
    t_off = {1: 0.27794, 3: 0.28644, 22: 0.29158}
    t_ona = {1: 0.25000, 3: 0.26302, 22: 0.28153}
    t_sb = {1: 0.16667, 3: 0.16728, 22: 0.16732}
    t_on = {1: 0.2500, 3: 0.2726, 22: 0.2879}
    for b in (1, 3, 22):
        c.close(f"offline T(B={b})", offline_throughput(b, b, p), t_off[b], 5e-4)
        c.close(f"ONA T(B={b})", ona_schedule(float(b), b, p)[1], t_ona[b], 5e-4)
        c.close(
            f"single-battery T(B={b})",
            solve_integer(float(b), p).integer_throughput,
            t_sb[b],
            5e-4,
        )
    c.close(
        "SNA T(B=1)",
        analytic_renewal_throughput(sna_schedule(1.0, 1, p), 1, p),
        0.20076,
        5e-4,
    )
    dp_bs = (1, 3) if quick else (1, 3, 22)
    for b in dp_bs:
        c.close(f"DP gain(B={b})", solve_dp(float(b), b, p).gain, t_on[b], 3e-3)
    return c


def _c05_sandwich(quick: bool) -> _Check:
    c = _Check()
    worst = math.inf
    for r in (1, 2, 4):
        for p in (0.1, 0.5, 0.9):
            for e_h in (1.0, 5.0, 10.0):
                b = r * e_h
                t_ub, t_lb = sandwich_bounds(b, r, p)
                t_ona = ona_schedule(b, r, p)[1]
                t_sna = analytic_renewal_throughput(sna_schedule(b, r, p), r, p)
                margin = min(t_ub - t_ona, t_ona - t_sna + 1e-12, t_sna - t_lb)
                worst = min(worst, margin)
    c.holds(
        "T_ub >= T_ONA >= T_SNA >= T_ub - G(r) on the grid",
        worst >= -1e-9,
        f"(smallest slack {worst:.3e})",
    )
    return c


def _c06_sim_vs_analytic(quick: bool) -> _Check:
    c = _Check()
    n = 10**5 if quick else 10**6
    model = ArrivalModel(p=0.5, e_h=1.0, battery_capacity=1.0)
    analytic = {
        "ona": ona_schedule(1.0, 1, 0.5)[1],
        "sna": analytic_renewal_throughput(sna_schedule(1.0, 1, 0.5), 1, 0.5),
        "cp": analytic_renewal_throughput(cp_schedule(1.0, 1, 0.5), 1, 0.5),
    }
    for i, (name, target) in enumerate(analytic.items()):
        stats = simulate(name, model, "dual", n, seed=1000 + i)
        tol = max(3.0 * stats.ci_halfwidth, 0.005)
        c.close(f"simulated {name.upper()} vs analytic", stats.avg_throughput, target, tol)
    return c


def _c07_idle_fraction(quick: bool) -> _Check:
    c = _Check()
    n = 2 * 10**5 if quick else 2 * 10**6
    model = ArrivalModel(p=0.01, e_h=100.0, battery_capacity=100.0)  # mu = 1
    stats = simulate("sb_opt", model, "single", n, seed=3)
    c.close("single-battery idle fraction at mu=1", stats.idle_fraction, 0.63, 0.01)
    return c


def _c08_adaptive_dominance(quick: bool) -> _Check:
    c = _Check()
    n = 10**5 if quick else 10**6
    cases = [
        (ArrivalModel(p=0.5, e_h=1.0, battery_capacity=2.0), 2),
        (ArrivalModel(p=0.25, e_h=1.0, battery_capacity=4.0), 4),
    ]
    for model, r in cases:
        b = model.battery_capacity
        t_ona = ona_schedule(b, r, model.p)[1]
        t_sna = analytic_renewal_throughput(sna_schedule(b, r, model.p), r, model.p)
        s_oa = simulate("oa", model, "dual", n, seed=21)
        s_sa = simulate("sa", model, "dual", n, seed=22)
        c.holds(
            f"T_OA >= T_ONA - CI on (B={b}, r={r})",
            s_oa.avg_throughput >= t_ona - s_oa.ci_halfwidth,
            f"({s_oa.avg_throughput:.5f} vs {t_ona:.5f}, CI {s_oa.ci_halfwidth:.5f})",
        )
        c.holds(
            f"T_SA >= T_SNA - CI on (B={b}, r={r})",
            s_sa.avg_throughput >= t_sna - s_sa.ci_halfwidth,
            f"({s_sa.avg_throughput:.5f} vs {t_sna:.5f}, CI {s_sa.ci_halfwidth:.5f})",
        )
    return c


_FIG7_INSTANCE = MacInstance(
    [ArrivalModel(0.25, 10.0, 20.0), ArrivalModel(0.25, 10.0, 20.0)]
)


def _c09_outer_bound(quick: bool) -> _Check:
    c = _Check()
    ob = outer_bound(_FIG7_INSTANCE)
    c.close("per-user outer constraint", ob[(0,)], 0.90368, 1e-5)
    c.close("sum outer constraint", ob[(0, 1)], 1.29248, 1e-5)
    c.close("corner rate", ob[(0, 1)] - ob[(0,)], 0.38880, 1e-5)
    return c


def _c10_quadratic_transform(quick: bool) -> _Check:
    c = _Check()
    pt = sb_boundary_point(_FIG7_INSTANCE, (0.5, 0.5))
    c.holds("surrogate monotone (asserted in solver)", pt.converged)
    c.close("symmetric max-sum T_1", pt.throughputs[0], 0.327, 5e-3)
    c.close("symmetric max-sum T_2", pt.throughputs[1], 0.327, 5e-3)
    solo = sb_boundary_point(_FIG7_INSTANCE, (1.0, 0.0))
    c.close("axis intercept", solo.throughputs[0], 0.45454, 1e-3)

    # Grid oracle for the inner convex step at mu = (1, 1): the quadratic
    # surrogate at the converged multipliers is maximised by brute force
    # over (R_1, R_2, P_1, P_2) and compared with the solver's value.
    inst = MacInstance([ArrivalModel(0.5, 2.0, 2.0), ArrivalModel(0.5, 2.0, 2.0)])
    lam = np.array([0.5, 0.5])
    pt = sb_boundary_point(inst, tuple(lam))
    mu = inst.mean_rates
    rates = np.array(pt.rates)
    powers = np.array(pt.powers)
    y = np.sqrt(lam * mu * rates) / (mu + powers)
    solver_value = float(
        np.sum(2 * y * np.sqrt(lam * mu * rates) - y**2 * (mu + powers))
    )
    grid_n = 60 if quick else 100
    p_grid = np.linspace(0.0, 6.0, grid_n)
    best = -math.inf
    r2_grid = None
    for p1 in p_grid:
        f1 = 0.5 * math.log2(1.0 + p1)
        for p2 in p_grid:
            f2 = 0.5 * math.log2(1.0 + p2)
            f12 = 0.5 * math.log2(1.0 + p1 + p2)
            r1 = np.linspace(0.0, f1, grid_n)
            r2 = np.minimum(f2, f12 - r1)
            valid = r2 >= 0
            val = (
                2 * y[0] * np.sqrt(lam[0] * mu[0] * r1[valid])
                + 2 * y[1] * np.sqrt(lam[1] * mu[1] * r2[valid])
                - y[0] ** 2 * (mu[0] + p1)
                - y[1] ** 2 * (mu[1] + p2)
            )
            if val.size:
                best = max(best, float(val.max()))
    c.close("surrogate grid oracle at mu=(1,1)", solver_value, best, 5e-3)
    # Quadratic-transform equivalence: surrogate value equals the weighted
    # throughput at the fixed point.
    c.close(
        "surrogate equals weighted throughput",
        solver_value,
        float(lam @ np.array(pt.throughputs)),
        1e-9,
    )
    return c


def _c11_dual_battery_solver(quick: bool) -> _Check:
    c = _Check()
    solo = db_boundary_point(_FIG7_INSTANCE, (1.0, 0.0))
    schedule, tp = ona_schedule(20.0, 2, 0.25)
    diff = float(
        np.max(np.abs(np.array(solo.powers[0])[: len(schedule.powers)] - schedule.powers))
    )
    c.holds("solo weight reduces to the P2P schedule", diff <= 1e-6, f"(max power diff {diff:.1e})")
    sym = db_boundary_point(_FIG7_INSTANCE, (0.5, 0.5))
    c.close("symmetric max-sum T_1", sym.throughputs[0], 0.5165, 0.01)
    c.close("symmetric max-sum T_2", sym.throughputs[1], 0.5165, 0.01)
    inst_asym = MacInstance(
        [ArrivalModel(0.25, 10.0, 20.0), ArrivalModel(0.125, 20.0, 20.0)]
    )
    asym = db_boundary_point(inst_asym, (0.5, 0.5))
    c.close("asymmetric max-sum T_1", asym.throughputs[0], 0.690, 0.01)
    c.close("asymmetric max-sum T_2", asym.throughputs[1], 0.298, 0.01)
    return c


def _c12_region_nesting(quick: bool) -> _Check:
    c = _Check()
    resolution = 15 if quick else 49
    sb = region_sweep(_FIG7_INSTANCE, "single", resolution)
    db = region_sweep(_FIG7_INSTANCE, "dual", resolution)
    c.holds("all sweep points solved", not sb.failures and not db.failures)
    ob = outer_bound(_FIG7_INSTANCE)
    ok_sb_db = True
    ok_db_outer = True
    for psb, pdb in zip(sb.points, db.points):
        lam = np.array(psb.weights)
        if float(lam @ np.array(psb.throughputs)) > float(
            lam @ np.array(pdb.throughputs)
        ) + 1e-6:
            ok_sb_db = False
        t_db = np.array(pdb.throughputs)
        for s, cap in ob.items():
            if float(t_db[list(s)].sum()) > cap + 1e-9:
                ok_db_outer = False
    c.holds("single-battery boundary within dual-battery", ok_sb_db)
    c.holds("dual-battery boundary within outer bound", ok_db_outer)
    return c


def _c13_user_scaling(quick: bool) -> _Check:
    c = _Check()
    model = ArrivalModel(0.2, 10.0, 10.0)
    upper = sum_throughput_vs_users(model, "upper", 3)
    c.close("upper bound at U=3, mu=2 per user", upper[2], 1.40368, 1e-5)
    dual = sum_throughput_vs_users(model, "dual", 1)
    c.close("dual-battery sum at U=1", dual[0], 0.5593, 5e-3)
    return c


CRITERIA = [
    ("01-closed-forms", _c01_closed_forms),
    ("02-greedy-strictly-worse", _c02_greedy_strictly_worse),
    ("03-gap-bound-values", _c03_gap_bound),
    ("04-throughput-vs-capacity", _c04_throughput_vs_capacity),
    ("05-sandwich-chain", _c05_sandwich),
    ("06-simulation-vs-analytic", _c06_sim_vs_analytic),
    ("07-single-battery-idle", _c07_idle_fraction),
    ("08-adaptive-dominance", _c08_adaptive_dominance),
    ("09-mac-outer-bound", _c09_outer_bound),
    ("10-quadratic-transform", _c10_quadratic_transform),
    ("11-dual-battery-region-solver", _c11_dual_battery_solver),
    ("12-region-nesting", _c12_region_nesting),
    ("13-sum-throughput-scaling", _c13_user_scaling),
]


def run_acceptance(quick: bool = False, only: list[str] | None = None) -> list[CheckResult]:
    results = []
    for name, fn in CRITERIA:
        if only and name not in only:
            continue
        start = time.time()
        check = fn(quick)
        results.append(
            CheckResult(
                name=name,
                passed=check.passed,
                details=check.details,
                duration=time.time() - start,
            )
        )
    return results
