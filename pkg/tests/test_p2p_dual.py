"""Dual-battery policies: schedule constructions, bounds, and the DP."""

import math

import numpy as np
import pytest

from ehlab.numerics import FillTimeLaw, fill_time_ccdf_table
from ehlab.p2p_dual import (
    DpConfig,
    DpConvergenceError,
    adaptive_power,
    adaptive_schedule,
    cp_schedule,
    offline_throughput,
    ona_schedule,
    sandwich_bounds,
    sna_schedule,
    solve_dp,
)
from ehlab.simulator import analytic_renewal_throughput


class TestOffline:
    def test_deterministic_arrivals_hit_upper_bound(self):
        assert offline_throughput(2.0, 2, 1.0) == pytest.approx(0.5)  # 0.5*log2(2)

    def test_hand_series_oracle(self):
        # Direct 50-term summation of (p/r) sum n q_n/2 log2(1+B/n) at
        # b=1, r=1, p=0.5 (geometric fill time).
        total = sum(
            n * 0.5**n * 0.5 * math.log2(1.0 + 1.0 / n) for n in range(1, 51)
        )
        assert offline_throughput(1.0, 1, 0.5) == pytest.approx(0.5 * total, abs=1e-3)
        assert offline_throughput(1.0, 1, 0.5) == pytest.approx(0.27794, abs=5e-4)

    def test_reference_values(self):
        assert offline_throughput(3.0, 3, 0.5) == pytest.approx(0.28644, abs=5e-4)
        assert offline_throughput(22.0, 22, 0.5) == pytest.approx(0.29158, abs=5e-4)


def _ona_two_slot_oracle(b: float, p: float) -> float:
    """Grid search over two-slot splits of the renewal objective for r=1."""
    fbar = (1.0, 1.0 - p)
    best = -1.0
    for p1 in np.linspace(0.0, b, 20_001):
        val = sum(
            p / 2.0 * fb * math.log2(1.0 + pw) for fb, pw in zip(fbar, (p1, b - p1))
        )
        best = max(best, val)
    return best


class TestOna:
    def test_small_instance_matches_grid_oracle(self):
        schedule, tp = ona_schedule(1.0, 1, 0.5)
        assert schedule.horizon_n == 2
        assert schedule.powers == pytest.approx([1.0, 0.0])
        assert tp == pytest.approx(0.25, abs=1e-9)
        assert tp == pytest.approx(_ona_two_slot_oracle(1.0, 0.5), abs=1e-6)

    def test_reference_values(self):
        assert ona_schedule(20.0, 2, 0.25)[1] == pytest.approx(0.716940, abs=1e-4)
        assert ona_schedule(22.0, 22, 0.5)[1] == pytest.approx(0.281533, abs=1e-4)

    @pytest.mark.parametrize(
        "b,r,p", [(1.0, 1, 0.5), (4.0, 2, 0.3), (9.0, 3, 0.7), (50.0, 5, 0.1)]
    )
    def test_structure(self, b, r, p):
        schedule, tp = ona_schedule(b, r, p)
        powers = schedule.powers
        assert schedule.horizon_n >= r
        # constant over the first r slots, nonincreasing afterwards
        assert np.allclose(powers[:r], powers[0])
        assert np.all(np.diff(powers) <= 1e-12)
        # strictly positive up to the horizon except possibly the last slot
        assert np.all(powers[:-1] > 0)
        # energy exactness
        assert abs(powers.sum() - b) <= 1e-9 * b
        # self-consistency with the generic renewal evaluator
        assert tp == pytest.approx(analytic_renewal_throughput(schedule, r, p), rel=1e-12)

    def test_certain_arrivals(self):
        schedule, tp = ona_schedule(4.0, 2, 1.0)
        assert schedule.powers == pytest.approx([2.0, 2.0])
        assert tp == pytest.approx(0.5 * math.log2(3.0))


class TestSna:
    def test_first_slot_is_mean_rate(self):
        schedule = sna_schedule(1.0, 1, 0.5)
        assert schedule.powers[0] == pytest.approx(0.5)

    def test_geometric_powers(self):
        schedule = sna_schedule(2.0, 1, 0.25)
        mu = 0.5
        expected = mu * 0.75 ** np.arange(6)
        assert schedule.powers[:6] == pytest.approx(expected, rel=1e-12)

    def test_total_energy_preserved(self):
        for b, r, p in [(1.0, 1, 0.5), (12.0, 4, 0.3), (100.0, 10, 0.05)]:
            assert sna_schedule(b, r, p).total_energy == pytest.approx(b, rel=1e-12)

    def test_analytic_value(self):
        tp = analytic_renewal_throughput(sna_schedule(1.0, 1, 0.5), 1, 0.5)
        assert tp == pytest.approx(0.200762, abs=5e-4)


class TestCp:
    def test_schedule(self):
        schedule = cp_schedule(1.0, 1, 0.5)
        assert schedule.powers == pytest.approx([0.5, 0.5])

    def test_certain_arrivals_match_offline(self):
        schedule = cp_schedule(3.0, 1, 1.0)
        assert schedule.powers == pytest.approx([3.0])
        tp = analytic_renewal_throughput(schedule, 1, 1.0)
        assert tp == pytest.approx(offline_throughput(3.0, 1, 1.0))

    def test_hand_series(self):
        # q_1 transmitting 1 slot + Fbar_1 giving a 2nd slot at power 0.5:
        # (p/2) * log2(1.5) * (Fbar_0 + Fbar_1) with Fbar = (1, 0.5).
        expected = 0.25 * math.log2(1.5) * 1.5
        tp = analytic_renewal_throughput(cp_schedule(1.0, 1, 0.5), 1, 0.5)
        assert tp == pytest.approx(expected, rel=1e-12)
        assert tp == pytest.approx(0.2194, abs=1e-4)


class TestAdaptive:
    def test_first_slot_of_renewal_equals_schedule(self):
        # SA with no arrivals yet: mu' * Fbar_0 = working * p / r.
        assert adaptive_power(3.0, 0, 3, 0.4, 1, "SA") == pytest.approx(3.0 * 0.4 / 3.0)

    def test_oa_reduced_instance(self):
        assert adaptive_power(1.0, 0, 1, 0.5, 1, "OA") == pytest.approx(1.0)
        assert adaptive_power(1.0, 0, 1, 0.5, 2, "OA") == pytest.approx(0.0)

    def test_residual_schedule_budget(self):
        schedule = adaptive_schedule(1.7, 2, 4, 0.3, "OA")
        assert schedule.total_energy == pytest.approx(1.7, rel=1e-9)

    def test_validation(self):
        with pytest.raises(ValueError):
            adaptive_power(1.0, 4, 4, 0.5, 1, "OA")
        with pytest.raises(ValueError):
            adaptive_power(1.0, 0, 1, 0.5, 1, "XX")


class TestSandwich:
    def test_reference_points(self):
        t_ub, t_lb = sandwich_bounds(2.0, 1, 0.5)  # mu = 1
        assert t_ub == pytest.approx(0.5)
        assert t_lb == pytest.approx(-0.221, abs=2e-3)
        t_ub, t_lb = sandwich_bounds(108.0, 3, 0.1)  # E_H = 36
        assert t_lb == pytest.approx(0.692, abs=0.01)

    def test_certain_arrivals_collapse(self):
        _, tp = ona_schedule(4.0, 2, 1.0)
        from ehlab.numerics import throughput_upper_bound

        assert tp == pytest.approx(throughput_upper_bound(2.0))

    @pytest.mark.parametrize("r", [1, 2, 4])
    @pytest.mark.parametrize("p", [0.1, 0.3, 0.5, 0.9])
    @pytest.mark.parametrize("e_h", [1.0, 5.0, 10.0])
    def test_bound_chain(self, r, p, e_h):
        b = r * e_h
        t_ub, t_lb = sandwich_bounds(b, r, p)
        t_ona = ona_schedule(b, r, p)[1]
        t_sna = analytic_renewal_throughput(sna_schedule(b, r, p), r, p)
        assert t_ub >= t_ona - 1e-12
        assert t_ona >= t_sna - 1e-9
        assert t_sna >= t_lb - 1e-9


@pytest.mark.parametrize("b,r,p", [(1.0, 1, 0.5), (3.0, 3, 0.5), (4.0, 2, 0.25)])
def test_dominance_chain(b, r, p):
    """Offline >= DP online >= ONA >= SNA, and DP online >= CP, up to the
    DP's grid tolerance."""
    t_off = offline_throughput(b, r, p)
    t_on = solve_dp(b, r, p).gain
    t_ona = ona_schedule(b, r, p)[1]
    t_sna = analytic_renewal_throughput(sna_schedule(b, r, p), r, p)
    t_cp = analytic_renewal_throughput(cp_schedule(b, r, p), r, p)
    grid_slack = 1e-3
    assert t_off >= t_on - grid_slack
    assert t_on >= t_ona - grid_slack
    assert t_ona >= t_sna - 1e-9
    assert t_on >= t_cp - grid_slack


class TestDp:
    def test_small_instances(self):
        assert solve_dp(1.0, 1, 0.5).gain == pytest.approx(0.250, abs=2e-3)
        assert solve_dp(3.0, 3, 0.5).gain == pytest.approx(0.2726, abs=3e-3)

    def test_certain_arrivals(self):
        assert solve_dp(1.0, 1, 1.0).gain == pytest.approx(0.5, abs=1e-6)

    def test_grid_refinement(self):
        g1 = solve_dp(1.0, 1, 0.5, DpConfig(working_grid_points=200)).gain
        g2 = solve_dp(1.0, 1, 0.5, DpConfig(working_grid_points=400)).gain
        assert abs(g1 - g2) < 1e-3

    def test_finite_horizon_validation_mode(self):
        fh = solve_dp(1.0, 1, 0.5, method="finite_horizon", horizon=20_000)
        assert fh.gain == pytest.approx(0.25, abs=1e-3)

    def test_policy_spends_full_battery_when_charging_full(self):
        sol = solve_dp(1.0, 1, 0.5)
        # at (working=B, charging full) the switch needs an empty battery,
        # and the optimal action drains it
        assert sol.power_for(1.0, 1.0) > 0.0

    def test_serialisation_rows(self):
        sol = solve_dp(1.0, 1, 0.5, DpConfig(working_grid_points=10))
        rows = list(sol.to_rows())
        assert len(rows) == 11 * 2
        working, charging, power, value = rows[0]
        assert power <= working + 1e-12

    def test_convergence_error_reports_span(self):
        with pytest.raises(DpConvergenceError) as info:
            solve_dp(3.0, 3, 0.5, DpConfig(max_iterations=3))
        assert info.value.span > 0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DpConfig(working_grid_points=1)
        with pytest.raises(ValueError):
            DpConfig(action_grid_points=7)  # does not divide 200

    @pytest.mark.slow
    def test_large_instance(self):
        assert solve_dp(22.0, 22, 0.5).gain == pytest.approx(0.2879, abs=3e-3)
