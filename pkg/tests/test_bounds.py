import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from otquant.bounds import (
    DensityModel, LipschitzParams, alpha_gaussian, alpha_laplace, bennett_distortion,
    bit_budget, bound_report, delta_u, eps_e, eps_u, fid_bound_ot, fid_bound_uniform,
    gronwall_envelope, min_bits_for_fid, rho,
)

E1 = math.e - 1


def alpha_quad(pdf) -> float:
    """alpha = integral of f^(1/3), by adaptive quadrature."""
    return quad(lambda w: pdf(w) ** (1 / 3), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0]


def gauss_pdf(sigma):
    return lambda w: math.exp(-0.5 * (w / sigma) ** 2) / (sigma * math.sqrt(2 * math.pi))


def laplace_pdf(beta):
    return lambda w: math.exp(-abs(w) / beta) / (2 * beta)


class TestAlpha:
    @pytest.mark.parametrize("sigma", [0.1, 1.0, 3.0])
    def test_gaussian_against_quadrature(self, sigma):
        assert alpha_gaussian(sigma) == pytest.approx(alpha_quad(gauss_pdf(sigma)), rel=1e-9)

    @pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
    def test_laplace_against_quadrature(self, beta):
        assert alpha_laplace(beta) == pytest.approx(alpha_quad(laplace_pdf(beta)), rel=1e-9)

    def test_laplace_cube(self):
        assert alpha_laplace(1.0) ** 3 == pytest.approx(108.0, abs=1e-9)
        assert alpha_laplace(3.0) ** 3 == pytest.approx(108.0 * 9, rel=1e-12)

    def test_gaussian_cube(self):
        assert alpha_gaussian(1.0) ** 3 == pytest.approx(32.648, abs=1e-3)
        assert 32.5 <= alpha_gaussian(1.0) ** 3 <= 32.9

    def test_gaussian_scaling(self):
        assert alpha_gaussian(8.0) == pytest.approx(4 * alpha_gaussian(1.0), rel=1e-14)

    def test_density_model(self):
        assert DensityModel("gaussian", 2.0).alpha == alpha_gaussian(2.0)
        assert DensityModel("laplace", 1.0).sigma == pytest.approx(math.sqrt(2))
        assert DensityModel("empirical", 3.0).alpha == 3.0
        with pytest.raises(ValueError):
            DensityModel("gaussian", 0.0)
        with pytest.raises(ValueError):
            DensityModel("cauchy", 1.0)


class TestDeltaU:
    def test_examples(self):
        d = delta_u(1.0, 2)
        assert d.printed == 0.5 and d.true_half_step == 0.25
        assert delta_u(0.0, 5).printed == 0.0

    def test_each_bit_halves(self):
        for b in range(1, 20):
            assert delta_u(3.7, b + 1).printed == delta_u(3.7, b).printed / 2


class TestEnvelopes:
    def test_eps_u_zero_lipschitz_limit(self):
        # R=1, b=2 gives the printed delta_u = 0.5
        params = LipschitzParams(L_x=0.0)
        assert eps_u(2.0, 2, params, 1.0) == 1.0

    def test_eps_u_zero_gap(self):
        np.testing.assert_array_equal(eps_u(np.linspace(0, 1, 5), 4, LipschitzParams(), 0.0), 0.0)

    def test_eps_u_worked_example(self):
        # R=1, b=3 gives delta_u = 0.25
        params = LipschitzParams(L_x=1.0, L_theta_inf=2.0)
        assert eps_u(1.0, 3, params, 1.0) == pytest.approx(0.5 * E1, rel=1e-15)
        assert eps_u(1.0, 3, params, 1.0) == pytest.approx(0.859141, abs=1e-6)

    def test_eps_e_examples(self):
        params = LipschitzParams(L_x=1.0, p=4)
        assert eps_e(1.0, 8, params, 0.25) == pytest.approx(E1, rel=1e-15)
        assert eps_e(0.7, 8, params, 0.0) == 0.0

    def test_eps_e_matches_eps_u_on_equal_gap(self):
        params = LipschitzParams(L_x=0.8, L_theta_inf=1.0, L_theta_2=1.0, p=1)
        t = np.linspace(0, 1, 9)
        # printed delta_u for R=1, b=3 is 0.25, so d_e=0.0625 gives the same gap
        np.testing.assert_allclose(eps_e(t, 3, params, 0.0625), eps_u(t, 3, params, 1.0), rtol=1e-15)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            eps_u(-0.1, 4, LipschitzParams(), 1.0)
        with pytest.raises(ValueError):
            eps_e(-0.1, 4, LipschitzParams(), 1.0)

    def test_continuity_at_small_lipschitz(self):
        t = np.linspace(0, 1, 11)
        near = gronwall_envelope(t, 0.3, 1e-8)
        series = 0.3 * (t + 1e-8 * t**2 / 2)
        np.testing.assert_allclose(near, series, atol=1e-9)
        np.testing.assert_allclose(near, gronwall_envelope(t, 0.3, 0.0), atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 5), st.floats(0, 10), st.floats(0, 4))
    def test_monotone_in_time(self, L, gap, T):
        t = np.linspace(0, T, 50)
        y = gronwall_envelope(t, gap, L)
        assert np.all(np.diff(y) >= 0)

    def test_solves_the_ode(self):
        # y' = L y + gap, checked by central differences
        L, gap, h = 1.3, 0.4, 1e-5
        t = np.linspace(0.1, 1.0, 10)
        deriv = (gronwall_envelope(t + h, gap, L) - gronwall_envelope(t - h, gap, L)) / (2 * h)
        np.testing.assert_allclose(deriv, L * gronwall_envelope(t, gap, L) + gap, rtol=1e-8)


class TestDistortionAndFID:
    def test_bennett_example(self):
        assert bennett_distortion(3.19541, 4) == pytest.approx(3.19541**3 / 12 / 256, rel=1e-15)
        # the quoted 0.010622 was formed with alpha**3 rounded to 32.63
        assert bennett_distortion(3.19541, 4) == pytest.approx(0.010622, rel=2e-4)

    def test_bennett_scale(self):
        s = 3.0
        base = bennett_distortion(2.0, 5)
        assert bennett_distortion(2.0 * s ** (2 / 3), 5) == pytest.approx(base * s**2, rel=1e-12)

    def test_uniform_worked_example(self):
        c, bound = fid_bound_uniform(LipschitzParams(), 1.0, 8)
        assert c == pytest.approx(E1**2, rel=1e-15)
        assert bound == pytest.approx(4.5051e-5, rel=1e-4)
        assert bound == c * 2.0**-16

    def test_ot_worked_example(self):
        c, bound = fid_bound_ot(LipschitzParams(), DensityModel("gaussian", 1.0), 8)
        a3 = alpha_gaussian(1.0) ** 3
        assert c == pytest.approx(E1**2 * a3 / 12, rel=1e-14)
        assert bound == pytest.approx(1.2257e-4, rel=1e-4)

    def test_degenerate_alpha(self):
        assert fid_bound_ot(LipschitzParams(), 0.0, 4).bound == 0.0

    def test_zero_lipschitz_limit(self):
        params = LipschitzParams(L_x=0.0, L_theta_inf=2.0, T=3.0)
        assert fid_bound_uniform(params, 0.5, 0).constant == pytest.approx((2 * 3 * 0.5) ** 2)

    @pytest.mark.parametrize("b", range(1, 16))
    def test_quarter_per_bit(self, b):
        params = LipschitzParams(L_x=0.7, L_theta_inf=1.3, L_theta_2=0.2, L_phi=2.0, p=5, T=2.0)
        for f in (
            lambda b: fid_bound_uniform(params, 3.0, b).bound,
            lambda b: fid_bound_ot(params, 2.5, b).bound,
            lambda b: bennett_distortion(2.5, b),
        ):
            assert f(b + 1) == f(b) / 4
        assert math.log2(fid_bound_uniform(params, 3.0, b).bound) - math.log2(
            fid_bound_uniform(params, 3.0, b + 1).bound) == pytest.approx(2.0, abs=1e-12)


class TestRho:
    def test_tail_ratios(self):
        params = LipschitzParams()
        g = rho(params, 10.0, DensityModel("gaussian", 1.0))
        assert g.tail_ratio == pytest.approx(0.3265, abs=1e-4)
        lap = DensityModel("laplace", 1 / math.sqrt(2))
        assert rho(params, 10 * lap.sigma, lap).tail_ratio == pytest.approx(0.54, rel=1e-12)

    def test_unit_sensitivities(self):
        params = LipschitzParams(L_theta_inf=1.0, L_theta_2=1.0, p=1)
        r = rho(params, 10.0, DensityModel("gaussian", 1.0))
        assert r.rho == pytest.approx(alpha_gaussian(1.0) ** 3 / 12 / 100, rel=1e-14)
        assert r.rho == pytest.approx(0.0272, abs=1e-4)

    def test_matched_front_terms(self):
        # L_theta_2 * sqrt(p) == L_theta_inf * R leaves only the histogram term
        params = LipschitzParams(L_theta_inf=0.1, L_theta_2=1.0, p=1)
        r = rho(params, 10.0, DensityModel("gaussian", 1.0))
        assert r.rho == pytest.approx(alpha_gaussian(1.0) ** 3 / 12, rel=1e-14)

    @pytest.mark.parametrize("seed", range(10))
    def test_equals_constant_ratio(self, seed):
        rng = np.random.default_rng(seed)
        params = LipschitzParams(*rng.uniform(0.1, 3, 4), p=int(rng.integers(1, 1000)), T=rng.uniform(0.1, 2))
        R, alpha = rng.uniform(0.1, 10), rng.uniform(0.1, 5)
        ratio = fid_bound_ot(params, alpha, 4).constant / fid_bound_uniform(params, R, 4).constant
        assert ratio == pytest.approx(rho(params, R, alpha).rho, rel=1e-12)

    def test_zero_range(self):
        with pytest.raises(ZeroDivisionError):
            rho(LipschitzParams(), 0.0, 1.0)


class TestBitBudget:
    def test_examples(self):
        assert bit_budget(1.0, 1.0) == 1
        c = 4.5051e-5 * 2**16
        assert c == pytest.approx(2.9525, abs=1e-4)
        assert bit_budget(4.5051e-5, c) == 8

    def test_exact_powers_of_four(self):
        assert bit_budget(1.0, 4.0**5) == 5
        assert bit_budget(1.0, 4.0**5 * (1 + 1e-15)) == 6

    def test_halving_delta_adds_at_most_one(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            c, d = 10 ** rng.uniform(-3, 6), 10 ** rng.uniform(-8, 1)
            assert 0 <= bit_budget(d / 2, c) - bit_budget(d, c) <= 1

    def test_minimality(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            c, d = 10 ** rng.uniform(-3, 6), 10 ** rng.uniform(-8, 1)
            b = bit_budget(d, c)
            assert c * 2.0 ** (-2 * b) <= d
            assert b == 1 or c * 2.0 ** (-2 * (b - 1)) > d

    def test_min_bits_examples(self):
        assert min_bits_for_fid(0.3, 0.3) == 0.0
        assert min_bits_for_fid(0.25, 4.0) == 2.0

    def test_min_bits_agrees_with_budget(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            c, goal = 10 ** rng.uniform(-3, 6), 10 ** rng.uniform(-8, 1)
            assert max(1, math.ceil(min_bits_for_fid(goal, c))) == bit_budget(goal, c)

    def test_invalid(self):
        with pytest.raises(ValueError):
            bit_budget(0.0, 1.0)
        with pytest.raises(ValueError):
            min_bits_for_fid(1.0, -1.0)


class TestBoundReport:
    def test_fields(self):
        params = LipschitzParams()
        rep = bound_report(params, 10.0, DensityModel("gaussian", 1.0), 6)
        assert rep.fid_bound_uniform == rep.c_u * 2.0**-12
        assert rep.fid_bound_ot == rep.c_e * 2.0**-12
        assert rep.delta_u == delta_u(10.0, 6).printed
        assert rep.d_e == bennett_distortion(alpha_gaussian(1.0), 6)
        assert rep.time_grid[0] == 0 and rep.time_grid[-1] == params.T
        assert rep.eps_u[-1] == pytest.approx(eps_u(1.0, 6, params, 10.0))
        assert rep.c_e / rep.c_u == pytest.approx(rep.rho, rel=1e-14)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            LipschitzParams(L_x=-1.0)
        with pytest.raises(ValueError):
            LipschitzParams(p=0)
        with pytest.raises(ValueError):
            LipschitzParams(T=0.0)
