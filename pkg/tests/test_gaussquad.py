import math

import numpy as np
import pytest

from wigner_match import NumericError, ParameterError, TailParams, alpha, constants, iota, phi, phi_batch, taylor_c
from wigner_match.gaussquad import tail_moment

from oracles import (
    FROZEN,
    alpha_bruteforce,
    iota_bruteforce_2d,
    phi_bruteforce_2d,
    taylor_c_hermite,
)

THETAS = (0.5, 1.0, 2.0)


class TestAlpha:
    def test_whole_line_at_zero(self):
        assert alpha(0.0) == 1.0

    def test_theta_one(self):
        assert abs(alpha(1.0) - FROZEN["alpha_theta1"]) < 1e-12
        assert abs(alpha(1.0) - alpha_bruteforce(1.0)) < 1e-13

    def test_theta_ten_is_desk_infeasible(self):
        # ~1.5e-23: with this alpha every thresholded set is empty at any
        # feasible matrix size, which is why theta defaults to 1.
        assert alpha(10.0) == pytest.approx(FROZEN["alpha_theta10"], rel=1e-10)

    def test_negative_theta_rejected(self):
        with pytest.raises(ParameterError):
            alpha(-0.5)


class TestPhi:
    @pytest.mark.parametrize("theta", THETAS)
    def test_independence_at_zero(self, theta):
        params = TailParams(theta=theta)
        assert abs(phi(0.0, params) - alpha(theta) ** 2) <= params.quad_tol

    @pytest.mark.parametrize("theta", THETAS)
    @pytest.mark.parametrize("u", (1.0, -1.0))
    def test_degenerate_correlation(self, theta, u):
        assert phi(u, TailParams(theta=theta)) == alpha(theta)

    def test_against_2d_bruteforce(self):
        got = phi(0.5, TailParams(theta=1.0))
        assert abs(got - FROZEN["phi_half_theta1"]) <= 1e-7
        assert abs(got - phi_bruteforce_2d(0.5, 1.0)) <= 1e-7

    def test_out_of_range_rejected(self):
        with pytest.raises(ParameterError):
            phi(1.5, TailParams())

    def test_even_in_u(self):
        params = TailParams()
        for u in np.linspace(0.05, 0.95, 10):
            assert abs(phi(u, params) - phi(-u, params)) <= 2 * params.quad_tol

    @pytest.mark.parametrize("theta", THETAS)
    def test_nondecreasing_on_unit_interval(self, theta):
        params = TailParams(theta=theta)
        grid = np.arange(0.0, 1.0 + 1e-9, 0.05)
        vals = [phi(u, params) for u in grid]
        for lo, hi in zip(vals, vals[1:]):
            assert hi >= lo - 2 * params.quad_tol

    def test_batch_matches_scalar(self):
        params = TailParams()
        us = np.concatenate([np.linspace(-1, 1, 41), [0.123456, -0.9999]])
        batch = phi_batch(us, params)
        for u, b in zip(us, batch):
            assert abs(b - phi(float(u), params)) < 1e-11

    def test_batch_deduplicates_shape(self):
        params = TailParams()
        us = np.array([[0.1, 0.1], [0.2, 0.1]])
        out = phi_batch(us, params)
        assert out.shape == us.shape
        assert out[0, 0] == out[0, 1] == out[1, 1]


class TestIota:
    def test_matches_second_difference(self):
        # symmetric second difference of phi at h = 1e-3; the step balances
        # truncation against cancellation at f64 precision
        params = TailParams(quad_tol=1e-12)
        h = 1e-3
        fd = (phi(h, params) + phi(-h, params) - 2 * phi(0.0, params)) / (2 * h * h)
        val = iota(1.0)
        assert abs(fd - val) <= 1e-3 * val

    @pytest.mark.parametrize("theta", THETAS + (3.0,))
    def test_positive(self, theta):
        assert iota(theta) > 0.0

    def test_against_2d_bruteforce(self):
        val = iota(1.0)
        assert abs(val - FROZEN["iota_theta1"]) <= 1e-10
        assert abs(val - iota_bruteforce_2d(1.0)) <= 1e-8

    def test_assembled_from_tail_moments(self):
        a0, a2 = tail_moment(0, 1.0), tail_moment(2, 1.0)
        assert a0 == pytest.approx(alpha(1.0), abs=1e-13)
        assert iota(1.0) == pytest.approx(0.5 * (a2 - a0) ** 2, abs=1e-12)


class TestTaylor:
    def test_c0_is_alpha_squared(self):
        params = TailParams()
        assert abs(taylor_c(0, 1.0, params) - alpha(1.0) ** 2) <= params.quad_tol

    def test_c1_vanishes(self):
        assert abs(taylor_c(1, 1.0)) <= TailParams().quad_tol

    def test_c2_is_iota(self):
        params = TailParams()
        assert abs(taylor_c(2, 1.0, params) - iota(1.0)) <= 2 * params.quad_tol

    @pytest.mark.parametrize("m", range(9))
    def test_against_hermite_expansion(self, m):
        got = taylor_c(m, 1.0)
        assert got == pytest.approx(taylor_c_hermite(m, 1.0), abs=1e-10)
        assert abs(got) <= (m + 1) * 4.0**m

    def test_order_out_of_range(self):
        with pytest.raises(ParameterError):
            taylor_c(9, 1.0)
        with pytest.raises(ParameterError):
            taylor_c(-1, 1.0)

    def test_partial_sums_bound_phi(self):
        # |phi(u) - sum_{m<=6} c_m u^m| <= sum_{m>=7} (m+1) 4^m |u|^m
        params = TailParams()
        cs = [taylor_c(m, 1.0, params) for m in range(7)]
        for u in (0.02, 0.05, 0.1, -0.1):
            partial = sum(c * u**m for m, c in enumerate(cs))
            tail_bound = sum((m + 1) * 4.0**m * abs(u) ** m for m in range(7, 80))
            assert abs(phi(u, params) - partial) <= tail_bound


class TestCurvatureWindow:
    def test_quadratic_window_near_zero(self):
        # phi(u) - phi(0) stays within two percent of iota * u^2 out to 0.1
        params = TailParams()
        val = iota(1.0)
        base = phi(0.0, params)
        for u in (0.02, 0.05, 0.1, -0.02, -0.05, -0.1):
            diff = phi(u, params) - base
            assert 0.98 * val * u * u < diff < 1.02 * val * u * u


class TestModelConstants:
    def test_constants_bundle(self):
        cst = constants(1.0)
        assert cst.alpha == alpha(1.0)
        assert cst.iota == iota(1.0)
        assert abs(cst.phi0 - cst.alpha**2) <= cst.params.quad_tol
        assert cst.alpha_var == pytest.approx(cst.alpha - cst.alpha**2)

    def test_bad_params_rejected(self):
        with pytest.raises(ParameterError):
            TailParams(theta=0.0)
        with pytest.raises(ParameterError):
            TailParams(quad_tol=1e-3)
