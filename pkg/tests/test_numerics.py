"""Special-function tests: independent oracles first, then properties.

Oracles used here: scipy's Lambert W (library code hand-rolls Halley),
brute-force enumeration of arrival sequences for the fill-time pmf, and
the closed geometric-case form of the gap bound
G(1) = max_p -((1-p)/2p) log2(1-p).
"""

import itertools
import math

import numpy as np
import pytest
import scipy.special

from ehlab.numerics import (
    DEFAULT_TRUNCATION,
    FillTimeLaw,
    TruncationConfig,
    fill_time_ccdf,
    fill_time_ccdf_table,
    fill_time_pmf,
    fill_time_pmf_table,
    gap_bound_g,
    gap_objective,
    lambert_w0,
    throughput_upper_bound,
)


class TestLambertW:
    def test_anchor_points(self):
        assert lambert_w0(0.0) == 0.0
        assert lambert_w0(math.e) == pytest.approx(1.0, abs=1e-14)
        assert lambert_w0(-math.exp(-1.0)) == -1.0

    def test_domain_error(self):
        with pytest.raises(ValueError):
            lambert_w0(-0.4)

    def test_self_consistency_on_log_grid(self):
        xs = np.concatenate(
            [
                -np.geomspace(1e-12, math.exp(-1) - 1e-12, 60),
                np.geomspace(1e-12, 1e6, 120),
                [0.0, -math.exp(-1)],
            ]
        )
        for x in xs:
            w = lambert_w0(float(x))
            assert w >= -1.0
            assert abs(w * math.exp(w) - x) <= 1e-12 * max(1.0, abs(x))

    def test_matches_scipy(self):
        for x in np.geomspace(1e-6, 1e5, 40):
            ref = float(scipy.special.lambertw(float(x)).real)
            assert lambert_w0(float(x)) == pytest.approx(ref, rel=1e-12)
        for x in -np.geomspace(1e-6, math.exp(-1) - 1e-9, 40):
            ref = float(scipy.special.lambertw(float(x)).real)
            assert lambert_w0(float(x)) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def _enumerated_pmf(r: int, p: float, n: int) -> float:
    """Brute force: probability the r-th arrival lands exactly in slot n."""
    total = 0.0
    for bits in itertools.product((0, 1), repeat=n):
        if sum(bits) >= r and bits[-1] == 1 and sum(bits[:-1]) == r - 1:
            k = sum(bits)
            total += p**k * (1 - p) ** (n - k)
    return total


class TestFillTimeLaw:
    def test_pmf_examples(self):
        assert fill_time_pmf(FillTimeLaw(1, 0.3), 4) == pytest.approx(0.3 * 0.7**3)
        assert fill_time_pmf(FillTimeLaw(2, 0.5), 2) == pytest.approx(0.25)
        # Enumerate all 2^3 arrival sequences for (r=2, n=3).
        assert _enumerated_pmf(2, 0.5, 3) == pytest.approx(0.25)
        assert fill_time_pmf(FillTimeLaw(2, 0.5), 3) == pytest.approx(0.25)

    def test_pmf_below_support(self):
        assert fill_time_pmf(FillTimeLaw(3, 0.4), 2) == 0.0

    @pytest.mark.parametrize("r,p,n", [(2, 0.3, 5), (3, 0.6, 7), (4, 0.5, 6)])
    def test_pmf_matches_enumeration(self, r, p, n):
        assert fill_time_pmf(FillTimeLaw(r, p), n) == pytest.approx(
            _enumerated_pmf(r, p, n), rel=1e-12
        )

    def test_ccdf_examples(self):
        assert fill_time_ccdf(FillTimeLaw(2, 0.5), 1) == 1.0
        assert fill_time_ccdf(FillTimeLaw(1, 0.5), 3) == pytest.approx(0.125)
        # Derived from the pmf oracle: Fbar_2 = 1 - q_2.
        assert fill_time_ccdf(FillTimeLaw(2, 0.5), 2) == pytest.approx(0.75)

    def test_ccdf_zero_index_and_monotone(self):
        law = FillTimeLaw(3, 0.35)
        table = fill_time_ccdf_table(law)
        assert table[0] == 1.0
        assert np.all(np.diff(table) <= 1e-15)

    @pytest.mark.parametrize(
        "r,p", [(1, 0.5), (2, 0.25), (5, 0.7), (17, 0.9), (100, 0.3), (10_000, 0.5)]
    )
    def test_mass_and_mean(self, r, p):
        law = FillTimeLaw(r, p)
        n, pmf = fill_time_pmf_table(law)
        assert pmf.sum() >= 1.0 - DEFAULT_TRUNCATION.tail_epsilon
        assert float(n @ pmf) == pytest.approx(r / p, rel=1e-9)
        # sum of the ccdf equals the mean fill time
        assert float(fill_time_ccdf_table(law).sum()) == pytest.approx(r / p, rel=1e-9)

    def test_deterministic_arrivals(self):
        law = FillTimeLaw(4, 1.0)
        assert fill_time_pmf(law, 4) == 1.0
        assert fill_time_pmf(law, 5) == 0.0
        assert fill_time_ccdf(law, 3) == 1.0
        assert fill_time_ccdf(law, 4) == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            FillTimeLaw(0, 0.5)
        with pytest.raises(ValueError):
            FillTimeLaw(2, 0.0)
        with pytest.raises(ValueError):
            TruncationConfig(tail_epsilon=1e-6)


class TestUpperBound:
    def test_values(self):
        assert throughput_upper_bound(0.0) == 0.0
        assert throughput_upper_bound(1.0) == pytest.approx(0.5)
        assert throughput_upper_bound(5.0) == pytest.approx(1.29248, abs=1e-5)

    def test_domain(self):
        with pytest.raises(ValueError):
            throughput_upper_bound(-0.1)


def _g1_closed_form(p: float) -> float:
    return -((1.0 - p) / (2.0 * p)) * math.log2(1.0 - p)


class TestGapBound:
    def test_geometric_closed_form_oracle(self):
        """For r=1 the series collapses analytically; the numeric objective
        must match it pointwise and the maximiser must match a dense scan."""
        for p in (1e-4, 0.01, 0.2, 0.5, 0.77):
            assert gap_objective(1, p) == pytest.approx(_g1_closed_form(p), rel=1e-10)
        grid = np.geomspace(1e-4, 1 - 1e-4, 4000)
        oracle = max(_g1_closed_form(float(p)) for p in grid)
        assert gap_bound_g(1) == pytest.approx(oracle, abs=1e-6)

    def test_monotone_in_r(self):
        gs = [gap_bound_g(r) for r in range(1, 33)]
        assert all(gs[i + 1] <= gs[i] for i in range(31))

    def test_decay_shape(self):
        for r in (1, 2, 4, 30):
            assert gap_bound_g(r) <= 0.721 / math.sqrt(r) + 0.02

    def test_reference_scale(self):
        # The worst case sits at the small-p end of the admissible range:
        # G(1) matches the geometric closed form there (0.7213); for r >= 2
        # the same evaluation gives 0.5062 / 0.3524 (see README on the
        # discrepancy with the tabulated 0.492 / 0.3455).
        assert gap_bound_g(1) == pytest.approx(0.7213, abs=2e-3)
        assert gap_bound_g(2) == pytest.approx(0.50623, abs=1e-3)
        assert gap_bound_g(4) == pytest.approx(0.35243, abs=1e-3)

    @pytest.mark.slow
    def test_large_r_tier(self):
        """Log-space pmf keeps r = 10^4 finite; the value continues the
        0.72/sqrt(r) trend."""
        g = gap_bound_g(10_000, p_bounds=(1e-3, 0.999))
        assert g == pytest.approx(0.0065, abs=1.5e-4)
        assert g <= 0.72 / math.sqrt(10_000) + 1e-4
