import pickle

import numpy as np
import pytest

from heatreg import (CoefficientState, PenaltyParams, SolverConfig,
                     build_dataset, fit_heat, fit_heat_oracle, fit_heat_path,
                     fit_reheat, kkt_residual, lambda_max, loss_reparam,
                     penalty_value)
from heatreg.solver import null_precisions

from conftest import random_multipop
from oracles import joint_objective, small_instance_solver


def _joint_value(fit, data, params):
    state = CoefficientState(fit.theta, fit.rho)
    return loss_reparam(state, data) + penalty_value(fit.theta, params)


class TestNullModel:
    def test_all_zero_above_lambda_max(self, rng):
        data, _, _ = random_multipop(rng)
        rho0 = null_precisions(data)
        lmax = lambda_max(data, rho0)
        params = PenaltyParams.for_dataset(data, 1.01 * lmax, 0.0)
        fit = fit_heat(data, params)
        assert np.all(fit.B_hat == 0.0)
        for j, b in enumerate(data.blocks):
            sd = np.sqrt(np.mean(b.y ** 2))
            assert np.isclose(fit.sigma_hat[j], sd, rtol=1e-10)


class TestDescentAndOptimality:
    def test_monotone_trace_and_kkt(self, rng):
        for _ in range(5):
            data, _, _ = random_multipop(rng, n=(60, 50), p=10)
            params = PenaltyParams.for_dataset(data, 0.08, 0.03)
            fit = fit_heat(data, params)
            diffs = np.diff(fit.objective_trace)
            assert np.all(diffs <= 1e-10)
            assert fit.converged
            assert fit.kkt <= 1e-4

    def test_public_kkt_matches_solver(self, rng):
        data, _, _ = random_multipop(rng)
        params = PenaltyParams.for_dataset(data, 0.05, 0.01)
        fit = fit_heat(data, params)
        state = CoefficientState(fit.theta, fit.rho)
        assert np.isclose(kkt_residual(state, data, params), fit.kkt,
                          rtol=1e-6, atol=1e-12)

    def test_small_instance_global_optimum(self, rng):
        # joint convexity: block-optimal fit must match the enumeration
        # oracle run at the fitted precisions
        data, _, _ = random_multipop(rng, n=(30, 25), p=5, s=2)
        params = PenaltyParams.for_dataset(data, 0.1, 0.05)
        fit = fit_heat(data, params, SolverConfig(tol=1e-9, kkt_tol=1e-6))
        ys = [b.y for b in data.blocks]
        Xs = [b.X for b in data.blocks]
        theta_star, val_star = small_instance_solver(
            ys, Xs, fit.rho, params.lam, params.gamma, params.row_weights,
            params.row_masks)
        val_fit = joint_objective(fit.theta, ys, Xs, fit.rho, params.lam,
                                  params.gamma, params.row_weights,
                                  params.row_masks)
        assert val_fit - val_star <= 1e-6

    def test_single_population_lasso_with_estimated_variance(self, rng):
        # J=1, lam=0, gamma>0: sparse fit with jointly estimated noise scale
        n, p = 30, 8
        X = rng.standard_normal((n, p))
        beta = np.zeros(p)
        beta[:3] = [1.2, -0.9, 0.6]
        y = X @ beta + 0.7 * rng.standard_normal(n)
        data = build_dataset([y], [X], ["A"])
        params = PenaltyParams.for_dataset(data, 0.0, 0.08)
        fit = fit_heat(data, params, SolverConfig(tol=1e-10, kkt_tol=1e-7))
        ys = [data.blocks[0].y]
        Xs = [data.blocks[0].X]
        theta_star, _ = small_instance_solver(
            ys, Xs, fit.rho, 0.0, 0.08, params.row_weights, params.row_masks,
            iters=8000)
        np.testing.assert_allclose(fit.theta, theta_star, atol=1e-4)


class TestScaleEquivariance:
    @pytest.mark.parametrize("c", [0.1, 3.0])
    def test_response_scaling(self, rng, c):
        data, _, _ = random_multipop(rng, n=(70, 60), p=12, s=4)
        y0, X0 = data.blocks[0].raw()
        y1, X1 = data.blocks[1].raw()
        scaled = build_dataset([c * y0, y1], [X0, X1], data.labels)
        params = PenaltyParams.for_dataset(data, 0.07, 0.02)
        # both runs solved well past the comparison tolerance so that the
        # algebraic map between them is what is actually being tested
        cfg = SolverConfig(tol=1e-12, kkt_tol=1e-8, max_inner=2000)
        f0 = fit_heat(data, params, cfg)
        f1 = fit_heat(scaled, PenaltyParams.for_dataset(scaled, 0.07, 0.02),
                      cfg)
        np.testing.assert_allclose(f1.theta, f0.theta, rtol=1e-5, atol=1e-10)
        np.testing.assert_allclose(f1.B_hat[:, 0], c * f0.B_hat[:, 0],
                                   rtol=1e-5, atol=1e-12)
        np.testing.assert_allclose(f1.B_hat[:, 1], f0.B_hat[:, 1], rtol=1e-5,
                                   atol=1e-12)
        assert np.isclose(f1.sigma_hat[0], c * f0.sigma_hat[0], rtol=1e-5)
        np.testing.assert_array_equal(f1.support, f0.support)


class TestVariants:
    def test_reheat_is_unit_precision(self, rng):
        data, _, _ = random_multipop(rng)
        params = PenaltyParams.for_dataset(data, 0.1, 0.02)
        f1 = fit_reheat(data, params)
        f2 = fit_heat_oracle(data, params, sigma_true=np.ones(2))
        np.testing.assert_array_equal(f1.theta, f2.theta)
        np.testing.assert_array_equal(f1.B_std, f1.theta)
        assert f1.estimator == "reheat"

    def test_reheat_large_lambda_zero(self, rng):
        data, _, _ = random_multipop(rng)
        lmax = lambda_max(data, np.ones(2))
        params = PenaltyParams.for_dataset(data, 1.01 * lmax, 0.0)
        fit = fit_reheat(data, params)
        assert np.all(fit.theta == 0.0)

    def test_oracle_at_fitted_sigma_is_fixed_point(self, rng):
        data, _, _ = random_multipop(rng, n=(80, 70), p=10)
        params = PenaltyParams.for_dataset(data, 0.06, 0.02)
        cfg = SolverConfig(tol=1e-10, kkt_tol=1e-7)
        free = fit_heat(data, params, cfg)
        orc = fit_heat_oracle(data, params, cfg, sigma_true=free.sigma_hat)
        np.testing.assert_allclose(orc.theta, free.theta, atol=1e-6)

    def test_huge_oracle_sigma_back_transform(self, rng):
        data, _, _ = random_multipop(rng)
        params = PenaltyParams.for_dataset(data, 0.05, 0.0)
        sigma = np.array([1.0, 1e3])
        fit = fit_heat_oracle(data, params, sigma_true=sigma)
        scales = data.blocks[1].column_scales
        np.testing.assert_allclose(fit.B_hat[:, 1],
                                   fit.theta[:, 1] * 1e3 / scales,
                                   rtol=1e-12)

    def test_invalid_configs(self, rng):
        data, _, _ = random_multipop(rng)
        params = PenaltyParams.for_dataset(data, 0.1, 0.0)
        with pytest.raises(ValueError):
            SolverConfig(rho_mode="fixed")
        with pytest.raises(ValueError):
            fit_heat_oracle(data, params, sigma_true=np.array([1.0, -1.0]))
        with pytest.raises(ValueError):
            SolverConfig(rho_mode="bogus")


class TestMasks:
    def test_masked_entries_exactly_zero(self, rng):
        avail = rng.random((9, 2)) > 0.3
        avail[0] = True  # keep at least one full row
        data, _, _ = random_multipop(rng, p=9, availability=avail)
        params = PenaltyParams.for_dataset(data, 0.03, 0.01)
        fit = fit_heat(data, params)
        assert np.all(fit.theta[~data.availability] == 0.0)
        assert np.all(fit.B_hat[~data.availability] == 0.0)

    def test_padding_equivalence(self, rng):
        # masked penalty + constraint vs free optimization over the padded
        # design with the same row weights: identical solutions
        for _ in range(3):
            avail = rng.random((8, 2)) > 0.35
            avail[~avail.any(axis=1), 0] = True  # union rows exist somewhere
            data, _, _ = random_multipop(rng, p=8, availability=avail)
            masked = PenaltyParams.for_dataset(data, 0.05, 0.02)
            free = PenaltyParams(
                lam=0.05, gamma=0.02,
                row_masks=np.ones_like(masked.row_masks),
                row_weights=masked.row_weights)
            f1 = fit_heat(data, masked)
            f2 = fit_heat(data, free)
            np.testing.assert_allclose(f1.B_hat, f2.B_hat, atol=1e-8)
            assert np.all(f2.theta[~data.availability] == 0.0)


class TestDeterminismAndPath:
    def test_bit_identical_refits(self, rng):
        data, _, _ = random_multipop(rng)
        params = PenaltyParams.for_dataset(data, 0.04, 0.01)
        f1 = fit_heat(data, params)
        f2 = fit_heat(data, params)
        assert pickle.dumps((f1.B_hat, f1.sigma_hat, f1.theta,
                             f1.objective_trace)) == \
            pickle.dumps((f2.B_hat, f2.sigma_hat, f2.theta,
                          f2.objective_trace))

    def test_path_matches_cold_fits(self, rng):
        data, _, _ = random_multipop(rng, n=(60, 50), p=10)
        rho0 = null_precisions(data)
        lams = lambda_max(data, rho0) * np.array([0.8, 0.4, 0.2])
        cfg = SolverConfig(tol=1e-9, kkt_tol=1e-6)
        path = fit_heat_path(data, lams, 0.0, cfg)
        for lam, warm in zip(lams, path):
            params = PenaltyParams.for_dataset(data, lam, 0.0)
            cold = fit_heat(data, params, cfg)
            assert abs(_joint_value(warm, data, params)
                       - _joint_value(cold, data, params)) <= 1e-7

    def test_nonconvergence_flag(self, rng):
        data, _, _ = random_multipop(rng)
        params = PenaltyParams.for_dataset(data, 0.02, 0.0)
        fit = fit_heat(data, params, SolverConfig(max_outer=1, max_inner=2,
                                                  tol=1e-14, kkt_tol=1e-12))
        assert not fit.converged
        assert np.isfinite(fit.kkt)
