"""Single-battery closed forms against dense-grid maximisation oracles."""

import math

import numpy as np
import pytest

from ehlab.p2p_single import (
    integer_objective,
    solve_greedy,
    solve_integer,
    solve_relaxed,
)


def _grid_max_relaxed(mu: float) -> float:
    """Independent oracle: maximise mu*log2(1+P)/(2(mu+P)) on a dense grid."""
    grid = np.linspace(1e-6, 60.0, 400_000)
    return float(np.max(mu * np.log2(1.0 + grid) / (2.0 * (mu + grid))))


class TestRelaxed:
    def test_mu_one_exact(self):
        power, tp = solve_relaxed(1.0)
        assert power == pytest.approx(math.e - 1.0, rel=1e-12)
        assert tp == pytest.approx(1.0 / (2.0 * math.log(2.0) * math.e), rel=1e-12)
        assert tp == pytest.approx(0.26536, abs=1e-4)

    def test_reference_values(self):
        assert solve_relaxed(0.5)[1] == pytest.approx(0.1673, abs=2e-4)
        assert solve_relaxed(2.5)[1] == pytest.approx(0.45454, abs=1e-4)

    @pytest.mark.parametrize("mu", [0.1, 0.5, 1.0, 2.5, 10.0])
    def test_against_grid_oracle(self, mu):
        assert solve_relaxed(mu)[1] == pytest.approx(_grid_max_relaxed(mu), abs=1e-8)

    @pytest.mark.parametrize("mu", [0.2, 0.7, 1.0, 3.3, 20.0])
    def test_stationarity_residual(self, mu):
        power, _ = solve_relaxed(mu)
        assert abs(mu + power - (1.0 + power) * math.log1p(power)) <= 1e-9

    @pytest.mark.parametrize("mu", [0.3, 2.0, 5.0])
    def test_lambert_branch_identity(self, mu):
        # exp(W0(x)) = x / W0(x) links the two closed forms for mu != 1.
        from ehlab.numerics import lambert_w0

        w = lambert_w0((mu - 1.0) * math.exp(-1.0))
        assert solve_relaxed(mu)[0] == pytest.approx((mu - 1.0) / w - 1.0, rel=1e-9)

    def test_domain(self):
        with pytest.raises(ValueError):
            solve_relaxed(0.0)


class TestInteger:
    def test_small_battery(self):
        sol = solve_integer(1.0, 0.5)
        assert sol.n_star == 2
        assert sol.integer_throughput == pytest.approx(1.0 / 6.0, rel=1e-12)
        # the rejected candidate is strictly worse
        assert integer_objective(1, 1.0, 0.5) == pytest.approx(0.1585, abs=1e-4)

    def test_reference_values(self):
        assert solve_integer(22.0, 0.5).integer_throughput == pytest.approx(0.167324, abs=5e-4)
        assert solve_integer(3.0, 0.5).integer_throughput == pytest.approx(0.16728, abs=5e-4)

    def test_exact_integer_slot_count(self):
        power, relaxed_tp = solve_relaxed(0.5)
        b = 3.0 * power / 2.0  # makes 2b/P* exactly 3
        sol = solve_integer(b, 0.5)
        assert sol.n_star == 3
        assert sol.integer_throughput == pytest.approx(relaxed_tp, rel=1e-12)

    def test_relaxed_independent_of_b(self):
        tps = {solve_integer(b, 0.5).relaxed_throughput for b in (1.0, 5.0, 50.0)}
        assert len({round(t, 15) for t in tps}) == 1

    def test_integer_approaches_relaxed(self):
        power, relaxed_tp = solve_relaxed(0.5)
        gaps = [
            relaxed_tp - solve_integer(k * power / 2.0 + 0.1, 0.5).integer_throughput
            for k in (2, 8, 64, 512)
        ]
        assert all(g >= -1e-12 for g in gaps)
        assert gaps[-1] < gaps[0]

    def test_bounded_by_relaxed(self):
        for b in np.linspace(0.3, 40.0, 25):
            sol = solve_integer(float(b), 0.8)
            assert sol.integer_throughput <= sol.relaxed_throughput + 1e-12
            assert sol.n_star in (
                max(1, math.floor(2 * b / sol.relaxed_power)),
                math.ceil(2 * b / sol.relaxed_power),
            )


def _grid_max_greedy(p: float, e_h: float) -> float:
    """Oracle: maximise (p*tau/2) log2(1 + (1-tau) e_h / tau) over tau."""
    tau = np.linspace(1e-6, 1.0, 400_000)
    return float(np.max(p * tau / 2.0 * np.log2(1.0 + (1.0 - tau) * e_h / tau)))


class TestGreedy:
    def test_unit_quantum(self):
        sol = solve_greedy(0.4, 1.0)
        assert sol.power == pytest.approx(math.e - 1.0, rel=1e-12)
        assert sol.tau == pytest.approx(1.0 / math.e, rel=1e-12)
        assert sol.throughput == pytest.approx(0.4 * 0.26536, abs=1e-4)

    def test_against_grid_oracle(self):
        sol = solve_greedy(0.1, 5.0)
        assert sol.throughput == pytest.approx(_grid_max_greedy(0.1, 5.0), abs=1e-7)
        assert sol.throughput == pytest.approx(0.0647, abs=1e-4)

    def test_tau_identity(self):
        sol = solve_greedy(0.3, 7.0)
        assert sol.tau == pytest.approx(7.0 / (sol.power + 7.0), rel=1e-12)

    def test_strictly_below_relaxed_on_grid(self):
        """The battery policy beats per-slot harvest-splitting whenever
        arrivals are uncertain (strict for every p < 1)."""
        for p in np.linspace(0.05, 0.95, 20):
            for e_h in np.linspace(0.2, 20.0, 20):
                assert solve_greedy(p, e_h).throughput < solve_relaxed(p * e_h)[1]

    def test_prop_instance(self):
        assert solve_greedy(0.1, 5.0).throughput < solve_relaxed(0.5)[1]
