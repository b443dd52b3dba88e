from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from runway_integrity.errors import DomainError
from runway_integrity.numerics import (
    ChiSquared,
    chi2_cdf,
    chi2_pdf,
    chi2_quantile,
    chi2_sf,
    regularized_gamma_p,
    regularized_gamma_q,
    std_normal_cdf,
)

# Frozen from independent routes: Gamma(2) by quadrature of t*exp(-t) for the
# density; quadrature of the density for the CDF; quadrature of the normal
# density for Phi. Each agrees with a 40-digit mpmath evaluation to < 1e-16.
PDF_DOF4_AT_3 = 0.16734762011132234
CDF_DOF6_AT_5 = 0.4561868841166705
PHI_AT_1_959964 = 0.9750000009035577


class TestChiSquaredType:
    def test_dof_must_be_positive(self):
        with pytest.raises(DomainError):
            ChiSquared(0)

    def test_accepts_int_or_dist(self):
        assert chi2_cdf(ChiSquared(2), 2.0) == chi2_cdf(2, 2.0)


class TestPdf:
    def test_dof2_at_zero(self):
        assert chi2_pdf(2, 0.0) == 0.5

    def test_dof2_closed_form(self):
        assert chi2_pdf(2, 2.0) == pytest.approx(0.5 * math.exp(-1.0), abs=1e-15)

    def test_dof4_against_quadrature_oracle(self):
        assert abs(chi2_pdf(4, 3.0) - PDF_DOF4_AT_3) <= 1e-10

    def test_dof1_diverges_at_zero(self):
        assert chi2_pdf(1, 0.0) == math.inf

    def test_negative_x_rejected(self):
        with pytest.raises(DomainError):
            chi2_pdf(3, -1e-9)

    @pytest.mark.parametrize("dof", [1, 2, 3, 4, 7, 16])
    def test_integrates_to_one(self, dof):
        total, _ = integrate.quad(lambda x: chi2_pdf(dof, x), 0, np.inf, limit=200)
        assert total == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("dof", [1, 2, 4, 8, 16])
    def test_is_derivative_of_cdf(self, dof):
        h = 1e-5
        for x in np.linspace(0.05, 40.0, 60):
            fd = (chi2_cdf(dof, x + h) - chi2_cdf(dof, x - h)) / (2 * h)
            assert abs(fd - chi2_pdf(dof, x)) <= 1e-6


class TestCdf:
    def test_dof2_at_zero(self):
        assert chi2_cdf(2, 0.0) == 0.0

    def test_dof6_against_quadrature_oracle(self):
        assert abs(chi2_cdf(6, 5.0) - CDF_DOF6_AT_5) <= 1e-10

    def test_dof2_closed_form_grid(self):
        xs = np.linspace(0.0, 50.0, 5001)
        err = max(abs(chi2_cdf(2, x) - (1.0 - math.exp(-0.5 * x))) for x in xs)
        assert err <= 1e-12

    def test_infinite_argument(self):
        assert chi2_cdf(3, math.inf) == 1.0
        assert chi2_sf(3, math.inf) == 0.0

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            chi2_cdf(2, -0.5)
        with pytest.raises(DomainError):
            chi2_cdf(2, math.nan)

    @pytest.mark.parametrize("dof", [1, 2, 3, 5, 10, 31, 100])
    def test_matches_mpmath(self, dof):
        for x in [1e-6, 0.1, 0.9, float(dof), dof + 1.5, 3.0 * dof, 60.0]:
            exact = float(mpmath.gammainc(dof / 2, 0, x / 2, regularized=True))
            assert chi2_cdf(dof, x) == pytest.approx(exact, rel=1e-13, abs=1e-15)

    @pytest.mark.parametrize("dof", [1, 2, 6])
    def test_sf_keeps_relative_accuracy_in_tail(self, dof):
        for x in [80.0, 200.0, 600.0]:
            exact = float(mpmath.gammainc(dof / 2, x / 2, mpmath.inf, regularized=True))
            assert chi2_sf(dof, x) == pytest.approx(exact, rel=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(
        dof=st.integers(1, 60),
        x=st.floats(0.0, 200.0),
        dx=st.floats(0.0, 5.0),
    )
    def test_monotone_and_complementary(self, dof, x, dx):
        c1, c2 = chi2_cdf(dof, x), chi2_cdf(dof, x + dx)
        assert 0.0 <= c1 <= c2 <= 1.0
        assert c1 + chi2_sf(dof, x) == pytest.approx(1.0, abs=2e-15)


class TestIncompleteGamma:
    @pytest.mark.parametrize("a", [0.5, 1.0, 2.5, 7.0, 40.0])
    def test_p_plus_q(self, a):
        for x in [0.01, a - 0.3 if a > 0.3 else 0.1, a + 1.0, a + 1.01, 3 * a + 5]:
            assert regularized_gamma_p(a, x) + regularized_gamma_q(a, x) == pytest.approx(1.0, abs=1e-15)

    def test_branch_seam_is_continuous(self):
        # series below a + 1, continued fraction above
        for a in [0.5, 3.0, 25.0]:
            x = a + 1.0
            lo, hi = regularized_gamma_p(a, x * (1 - 1e-12)), regularized_gamma_p(a, x * (1 + 1e-12))
            assert abs(hi - lo) < 1e-11

    def test_domain(self):
        with pytest.raises(DomainError):
            regularized_gamma_p(0.0, 1.0)


class TestQuantile:
    def test_closed_form_examples(self):
        assert chi2_quantile(2, 1 - math.exp(-1.0)) == pytest.approx(2.0, abs=1e-10)
        assert chi2_quantile(2, 0.999) == pytest.approx(-2 * math.log(0.001), abs=1e-10)
        assert chi2_quantile(2, 0.5) == pytest.approx(2 * math.log(2.0), abs=1e-10)

    @pytest.mark.parametrize("rho", [0.0, 1.0, -0.1, 1.5, math.nan])
    def test_domain(self, rho):
        with pytest.raises(DomainError):
            chi2_quantile(2, rho)

    @pytest.mark.parametrize("dof", [1, 2, 3, 4, 8, 16, 50])
    def test_inverts_cdf_in_probability(self, dof):
        for rho in [1e-9, 1e-4, 0.01, 0.2, 0.5, 0.8, 0.99, 0.999999]:
            assert abs(chi2_cdf(dof, chi2_quantile(dof, rho)) - rho) <= 1e-10 * max(1.0, rho)

    @pytest.mark.parametrize("dof", [1, 2, 4, 8, 16])
    def test_round_trip_where_probability_is_resolvable(self, dof):
        # below x = 30 the CDF is far enough from 1 that rounding rho costs < 1e-8 in x
        for x in np.linspace(0.01, 30.0, 600):
            assert abs(chi2_quantile(dof, chi2_cdf(dof, x)) - x) <= 1e-8

    @pytest.mark.parametrize("dof", [1, 2])
    def test_tail_round_trip_error_is_rho_rounding(self, dof):
        # the exact inverse of the rounded probability lands as far from x as we do
        mpmath.mp.dps = 50
        for x in [34.0, 37.5, 39.9]:
            rho = chi2_cdf(dof, x)
            exact = float(
                mpmath.findroot(
                    lambda t: mpmath.gammainc(dof / 2, 0, t / 2, regularized=True) - mpmath.mpf(rho),
                    x,
                )
            )
            ours = chi2_quantile(dof, rho)
            assert abs(ours - exact) <= 1e-9 * x
            # the loss is at least the spacing of doubles near rho divided by the density
            assert abs(exact - x) <= 2 * math.ulp(rho) / chi2_pdf(dof, x)
        mpmath.mp.dps = 15

    @settings(max_examples=150, deadline=None)
    @given(dof=st.integers(1, 40), rho=st.floats(1e-6, 1 - 1e-6))
    def test_quantile_monotone(self, dof, rho):
        a = chi2_quantile(dof, rho)
        b = chi2_quantile(dof, min(rho + 1e-3, 1 - 1e-9))
        assert 0.0 <= a <= b


class TestStdNormal:
    def test_center(self):
        assert std_normal_cdf(0.0) == 0.5

    def test_limits(self):
        assert std_normal_cdf(math.inf) == 1.0
        assert std_normal_cdf(-math.inf) == 0.0
        assert std_normal_cdf(40.0) == 1.0

    def test_quadrature_oracle(self):
        assert abs(std_normal_cdf(1.959964) - 0.975) <= 1e-6
        assert std_normal_cdf(1.959964) == pytest.approx(PHI_AT_1_959964, abs=1e-15)

    def test_array_input(self):
        z = np.array([[-1.0, 0.0], [1.0, 2.0]])
        out = std_normal_cdf(z)
        assert out.shape == z.shape
        assert out[0, 1] == 0.5

    @settings(max_examples=300)
    @given(st.floats(-40, 40))
    def test_symmetry(self, z):
        assert abs(std_normal_cdf(z) + std_normal_cdf(-z) - 1.0) <= 1e-14
