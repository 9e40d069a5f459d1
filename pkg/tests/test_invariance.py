import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bregflow.bregman import BetaGenerator, GridDensity, GridFunction
from bregflow.invariance import (
    constancy_defect,
    divergence_shift,
    first_variation_shift,
    report,
    scan,
)
from bregflow.targets import gaussian_target, to_grid


def normal_grid(mean=0.0, var=1.0, lo=-5.0, hi=5.0, n=1001):
    x = np.linspace(lo, hi, n)
    vals = np.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)
    return GridDensity(lo, hi, vals, mass=1.0)


def scalar_defect(beta, c, lo=-5.0, hi=5.0, n=1001):
    """Closed-form range of the shift, evaluated one point at a time with ``math``."""
    powers = []
    for i in range(n):
        x = lo + (hi - lo) * i / (n - 1)
        p = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
        powers.append(p ** (beta - 1.0))
    return abs((1.0 - c ** (beta - 1.0)) / (beta - 1.0)) * (max(powers) - min(powers))


PI = normal_grid()


class TestShift:
    @pytest.mark.parametrize("beta", [-1.0, 0.0, 0.5, 1.0, 2.0, 3.0])
    def test_unit_scale_is_zero(self, beta):
        delta = first_variation_shift(BetaGenerator(beta), 1.0, PI)
        np.testing.assert_array_equal(delta.values, 0.0)

    def test_kl_constant(self):
        delta = first_variation_shift(BetaGenerator(1.0), 2.0, PI)
        np.testing.assert_allclose(delta.values, -math.log(2.0), rtol=0, atol=1e-15)
        assert delta.values[0] == pytest.approx(-0.693147, abs=1e-6)

    def test_beta_two_is_minus_pi(self):
        delta = first_variation_shift(BetaGenerator(2.0), 2.0, PI)
        # (pi - 1) - (2 pi - 1) cancels to within a few ulps of 1
        np.testing.assert_allclose(delta.values, -PI.values, rtol=0, atol=4e-16)
        assert constancy_defect(delta) == pytest.approx(0.398941, abs=1e-6)

    def test_returns_grid_function(self):
        delta = first_variation_shift(BetaGenerator(2.0), 2.0, PI)
        assert isinstance(delta, GridFunction)
        assert delta.same_grid(PI)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            first_variation_shift(BetaGenerator(1.0), 0.0, PI)
        zero = GridDensity(0.0, 1.0, [0.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            first_variation_shift(BetaGenerator(1.0), 2.0, zero)


class TestDefect:
    def test_constant(self):
        assert constancy_defect(np.full(7, 3.5)) == 0.0

    def test_empty(self):
        with pytest.raises(ValueError):
            constancy_defect(np.array([]))

    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0, 1e-3, 1e4])
    @pytest.mark.parametrize("pi", [normal_grid(), normal_grid(1.0, 0.3), normal_grid(-2.0, 4.0)])
    def test_kl_defect_vanishes(self, c, pi):
        assert constancy_defect(first_variation_shift(BetaGenerator(1.0), c, pi)) <= 1e-12

    @pytest.mark.parametrize("beta", [0.0, 0.5, 2.0, 3.0])
    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_matches_scalar_formula(self, beta, c):
        d = constancy_defect(first_variation_shift(BetaGenerator(beta), c, PI))
        expected = scalar_defect(beta, c)
        assert d == pytest.approx(expected, rel=1e-12, abs=1e-12)
        assert d > 0

    @settings(max_examples=40, deadline=None)
    @given(
        beta=st.floats(-1.0, 3.0).filter(lambda b: abs(b - 1.0) > 1e-3),
        c=st.floats(0.1, 10.0).filter(lambda c: abs(c - 1.0) > 1e-3),
    )
    def test_non_kl_defect_positive(self, beta, c):
        pi = normal_grid(lo=-3.0, hi=3.0, n=201)
        assert constancy_defect(first_variation_shift(BetaGenerator(beta), c, pi)) > 0


class TestDivergenceShift:
    WIDE = dict(lo=-10.0, hi=10.0, n=4001)

    def test_unit_scale(self):
        mu = normal_grid(1.0, 1.0)
        for beta in (0.0, 1.0, 2.0):
            assert divergence_shift(BetaGenerator(beta), 1.0, mu, PI) == 0.0

    def test_kl_closed_form_and_mu_independence(self):
        pi = normal_grid(**self.WIDE)
        shifts = [
            divergence_shift(BetaGenerator(1.0), 2.0, normal_grid(m, 1.0, **self.WIDE), pi)
            for m in (0.0, 1.0)
        ]
        for s in shifts:
            assert s == pytest.approx(2.0 - 1.0 - math.log(2.0), abs=1e-5)
            assert s == pytest.approx(0.306853, abs=1e-5)
        assert abs(shifts[0] - shifts[1]) <= 1e-8

    @pytest.mark.parametrize("c", [0.5, 3.0, 10.0])
    def test_kl_general_c(self, c):
        pi = normal_grid(**self.WIDE)
        mu = normal_grid(-1.5, 2.0, **self.WIDE)
        s = divergence_shift(BetaGenerator(1.0), c, mu, pi)
        assert s == pytest.approx(c - 1.0 - math.log(c), abs=1e-8)

    def test_beta_two_depends_on_mu(self):
        # B_2(mu|c pi) - B_2(mu|pi) = (c^2 - 1)/2 int pi^2 - (c - 1) int mu pi
        pi = normal_grid(**self.WIDE)
        a = divergence_shift(BetaGenerator(2.0), 2.0, normal_grid(0.0, 1.0, **self.WIDE), pi)
        b = divergence_shift(BetaGenerator(2.0), 2.0, normal_grid(1.0, 1.0, **self.WIDE), pi)
        int_pi2 = 1.0 / (2.0 * math.sqrt(math.pi))
        assert a == pytest.approx(1.5 * int_pi2 - int_pi2, abs=1e-10)
        assert b == pytest.approx(1.5 * int_pi2 - int_pi2 * math.exp(-0.25), abs=1e-10)
        assert abs(a - b) > 1e-3

    def test_rejects_bad_c(self):
        with pytest.raises(ValueError):
            divergence_shift(BetaGenerator(1.0), -1.0, PI, PI)


class TestReportAndScan:
    def test_kl_report(self):
        mus = [normal_grid(0.0, 1.0), normal_grid(1.0, 1.0)]
        for c in (0.5, 2.0, 10.0):
            r = report(1.0, c, PI, mus)
            assert r.constancy_defect <= 1e-10
            assert r.mean_shift == pytest.approx(-math.log(c), abs=1e-12)
            assert r.constancy_defect >= 0

    def test_scan_sorted_and_complete(self):
        reports = scan([3.0, 1.0, 0.0], [10.0, 0.5], PI, [normal_grid()])
        assert [(r.beta, r.c) for r in reports] == [
            (0.0, 0.5), (0.0, 10.0), (1.0, 0.5), (1.0, 10.0), (3.0, 0.5), (3.0, 10.0)
        ]
        assert all(r.n == 1001 and r.lo == -5.0 and r.hi == 5.0 for r in reports)

    def test_scan_kl_defects(self):
        assert all(r.constancy_defect <= 1e-10 for r in scan([1.0], [0.5, 2.0, 10.0], PI, []))

    def test_scan_non_kl_defects(self):
        assert all(r.constancy_defect >= 0.01 for r in scan([0.0, 0.5, 2.0, 3.0], [2.0], PI, []))

    def test_empty_cs(self):
        assert scan([0.0, 1.0], [], PI, [PI]) == []

    def test_spread_measures_mu_dependence(self):
        mus = [normal_grid(0.0, 1.0, -10, 10, 4001), normal_grid(1.0, 1.0, -10, 10, 4001)]
        pi = normal_grid(lo=-10, hi=10, n=4001)
        assert report(1.0, 2.0, pi, mus).divergence_shift_spread <= 1e-8
        assert report(2.0, 2.0, pi, mus).divergence_shift_spread > 1e-3

    def test_as_dict_keys(self):
        d = report(1.0, 2.0, PI, [PI]).as_dict()
        assert list(d) == [
            "beta", "c", "constancy_defect", "mean_shift", "divergence_shift",
            "divergence_shift_spread", "lo", "hi", "n",
        ]

    def test_target_grid_agrees_with_direct_tabulation(self):
        pi = to_grid(gaussian_target([0.0], [[1.0]]), -5.0, 5.0, 1001, normalised=True)
        for beta in (0.0, 2.0):
            a = constancy_defect(first_variation_shift(BetaGenerator(beta), 2.0, pi))
            assert a == pytest.approx(scalar_defect(beta, 2.0), rel=1e-12)
