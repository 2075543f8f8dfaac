"""Closed-form and brute-force oracles for every full-conditional update."""

import numpy as np
import pytest
from scipy.stats import norm

from ordlag import ModelSpec
from ordlag.sampler import (build_context, conjugate_regression_moments,
                            dirichlet_logpdf, factor_conditional_moments,
                            global_mean_moments, initial_state,
                            inverse_gamma_update, sample_constrained_lags,
                            sample_lag_coefficients, sample_loadings,
                            sample_variance_simplex, sample_ztilde,
                            threshold_log_accept)
from ordlag.synth import generate_panel

from conftest import quick_spec, small_truth


def make_state_ctx(truth_kw=None, spec_kw=None, prior_only=False):
    truth = small_truth(**(truth_kw or {}))
    panel, covs, _ = generate_panel(truth)
    spec = quick_spec(truth, **(spec_kw or {}))
    rng = np.random.default_rng(99)
    ctx = build_context(panel, covs, spec, rng, prior_only=prior_only)
    state = initial_state(panel, ctx)
    return state, ctx


class TestFactorMoments:
    def test_matches_joint_gaussian_inversion(self):
        # (Y, Zt_1, Zt_2) are jointly Gaussian; condition directly
        rng = np.random.default_rng(1)
        for _ in range(25):
            d = rng.normal()
            tau2 = rng.uniform(0.2, 2.0)
            s2 = rng.uniform(0.2, 2.0)
            b0 = rng.normal(size=2)
            b = rng.normal(size=2)
            z = rng.normal(size=2)
            cov = np.empty((3, 3))
            cov[0, 0] = tau2
            cov[0, 1:] = cov[1:, 0] = b * tau2
            cov[1:, 1:] = np.outer(b, b) * tau2 + np.eye(2) * s2
            mean_vec = np.array([d, b0[0] + b[0] * d, b0[1] + b[1] * d])
            sol = np.linalg.solve(cov[1:, 1:], z - mean_vec[1:])
            want_mean = d + cov[0, 1:] @ sol
            want_var = tau2 - cov[0, 1:] @ np.linalg.solve(cov[1:, 1:], cov[1:, 0])
            got_mean, got_var = factor_conditional_moments(d, tau2, b, z - b0, s2)
            assert got_mean == pytest.approx(want_mean, abs=1e-10)
            assert got_var == pytest.approx(want_var, abs=1e-10)

    def test_no_metrics_returns_prior(self):
        mean, var = factor_conditional_moments(0.7, 0.3, np.array([]), np.array([]), 0.5)
        assert mean == pytest.approx(0.7)
        assert var == pytest.approx(0.3)

    def test_tight_noise_collapses_to_anchored_residual(self):
        # beta = (1, 0), sigma^2 -> 0: Y -> ztilde_1 - beta0_1
        mean, var = factor_conditional_moments(
            0.0, 1.0, np.array([1.0, 0.0]), np.array([2.3, 99.0]), 1e-14)
        assert mean == pytest.approx(2.3, abs=1e-9)
        assert var == pytest.approx(0.0, abs=1e-12)


class TestRegressionMoments:
    def test_single_observation_closed_form(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            x = rng.normal(size=3)
            yv = rng.normal()
            noise = rng.uniform(0.3, 2.0)
            pm = rng.normal(size=3)
            pv = rng.uniform(0.5, 5.0, size=3)
            mean, prec = conjugate_regression_moments(
                np.outer(x, x), x * yv, noise, pm, 1.0 / pv)
            want_prec = np.outer(x, x) / noise + np.diag(1.0 / pv)
            want_mean = np.linalg.solve(want_prec, x * yv / noise + pm / pv)
            np.testing.assert_allclose(prec, want_prec, atol=1e-10)
            np.testing.assert_allclose(mean, want_mean, atol=1e-10)

    def test_flat_prior_limit_is_least_squares(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(20, 4))
        yv = rng.normal(size=20)
        mean, _ = conjugate_regression_moments(X.T @ X, X.T @ yv, 1.0, 0.0, 1e-12)
        ols = np.linalg.lstsq(X, yv, rcond=None)[0]
        np.testing.assert_allclose(mean, ols, atol=1e-8)

    def test_no_information_returns_prior(self):
        mean, prec = conjugate_regression_moments(
            np.zeros((2, 2)), np.zeros(2), 1.0, 0.0, 1.0 / 10.0)
        np.testing.assert_allclose(mean, 0.0)
        np.testing.assert_allclose(np.linalg.inv(prec), np.eye(2) * 10.0)


class TestGlobalLag:
    def test_five_individual_conjugate_update(self):
        rng = np.random.default_rng(4)
        for _ in range(25):
            alphas = rng.normal(size=5)
            psi = rng.uniform(0.1, 2.0)
            v0 = 10.0
            mean, var = global_mean_moments(alphas.sum(), 5, psi, v0)
            want_prec = 5 / psi + 1 / v0
            assert var == pytest.approx(1 / want_prec, abs=1e-12)
            assert mean == pytest.approx(alphas.sum() / psi / want_prec, abs=1e-12)

    def test_single_individual_flat_prior(self):
        mean, var = global_mean_moments(1.7, 1, 0.5, 1e12)
        assert mean == pytest.approx(1.7, abs=1e-9)

    def test_inverse_gamma_update(self):
        dev = np.array([0.3, -0.2, 0.5])
        shape, rate = inverse_gamma_update(0.01, 0.01, dev)
        assert shape == pytest.approx(0.01 + 1.5)
        assert rate == pytest.approx(0.01 + 0.5 * (dev ** 2).sum())

    def test_identical_individuals_concentrate_psi(self):
        shape, rate = inverse_gamma_update(0.01, 0.01, np.zeros(200))
        # posterior mean b/(a-1) -> ~1e-4: concentrates at 0 as n grows
        assert rate / (shape - 1) < 2.1e-4

    def test_pinned_to_global_when_psi_tiny(self):
        state, ctx = make_state_ctx()
        state.alpha_global = np.full_like(state.alpha_global, 0.37)
        state.psi = np.full_like(state.psi, 1e-14)
        sample_lag_coefficients(state, ctx)
        np.testing.assert_allclose(state.alpha_ind, 0.37, atol=1e-5)


class TestLoadings:
    def test_anchor_untouched_and_exact(self):
        state, ctx = make_state_ctx()
        for _ in range(50):
            sample_loadings(state, ctx)
        np.testing.assert_array_equal(state.beta[:, :, 0], 1.0)

    def test_zero_variance_factor_slope_reverts_to_prior(self):
        state, ctx = make_state_ctx()
        state.y[:] = np.where(ctx.usable, 0.0, np.nan)
        draws = []
        for _ in range(4000):
            sample_loadings(state, ctx)
            draws.append(state.beta[0, 0, 1])
        draws = np.array(draws)
        assert abs(draws.mean()) < 4 * np.sqrt(10 / len(draws)) + 0.05
        assert abs(draws.var() - 10.0) < 0.8


class TestThresholdAccept:
    def test_single_observation_hand_computation(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            K = 5
            inc = np.exp(rng.normal(size=K - 2) * 0.3)
            theta = np.concatenate([[0.0], np.cumsum(inc)])
            prop_inc = inc * np.exp(rng.normal(size=K - 2) * 0.2)
            prop = np.concatenate([[0.0], np.cumsum(prop_inc)])
            mu = np.array([rng.normal()])
            sigma = rng.uniform(0.5, 1.5)
            cat = np.array([rng.integers(1, K + 1)])

            got = threshold_log_accept(theta, prop, mu, sigma, cat, 1.0)

            def interval(th, k, m):
                edges = np.concatenate([[-np.inf], th, [np.inf]])
                return norm.cdf((edges[k] - m) / sigma) - norm.cdf((edges[k - 1] - m) / sigma)

            # theta-space: target has prior prod phi(log g)/g (Jacobian), the
            # random-walk proposal contributes a Hastings factor prod g'/g
            lik = np.log(interval(prop, cat[0], mu[0]) / interval(theta, cat[0], mu[0]))
            pr = (np.sum(norm.logpdf(np.log(prop_inc)) - np.log(prop_inc))
                  - np.sum(norm.logpdf(np.log(inc)) - np.log(inc)))
            hastings = np.sum(np.log(prop_inc) - np.log(inc))
            assert got == pytest.approx(lik + pr + hastings, abs=1e-9)

    def test_identity_proposal_accepts(self):
        theta = np.array([0.0, 1.0, 2.0, 3.0])
        la = threshold_log_accept(theta, theta.copy(), np.array([0.5]), 1.0,
                                  np.array([2]), 1.0)
        assert la == pytest.approx(0.0, abs=1e-12)


class TestVarianceSimplex:
    def test_acceptance_rate_matches_direct_formula(self):
        state, ctx = make_state_ctx()
        s0 = state.var_simplex.copy()
        # freeze everything else; empirical acceptance over repeated moves
        n_trials = 4000
        before = ctx.counters.get("variance_simplex", [0, 0])[0]
        accepted = 0
        for _ in range(n_trials):
            state.var_simplex = s0.copy()
            old = state.var_simplex
            sample_variance_simplex(state, ctx)
            if state.var_simplex is not old:
                accepted += 1
        emp_rate = accepted / n_trials

        # independent estimate of E_q[min(1, r)] from the spec formulas
        from ordlag.sampler import compute_mu, dlm_mean
        mu = compute_mu(state)
        d = dlm_mean(state, ctx)
        ssz = float(((state.ztilde - mu)[ctx.observed] ** 2).sum())
        ssy = float(((state.y[0] - d[0])[ctx.usable] ** 2).sum())

        def loglik(v):
            return (-0.5 * (ctx.n_obs * np.log(v[0]) + ssz / v[0])
                    - 0.5 * (ctx.n_usable * np.log(v[1]) + ssy / v[1]))

        rng2 = np.random.default_rng(12345)
        conc = ctx.spx_conc
        prior = np.full(2, ctx.spec.dirichlet_concentration)
        ratios = []
        for _ in range(20000):
            prop = rng2.dirichlet(conc * s0)
            if np.any(prop <= 1e-12):
                ratios.append(0.0)
                continue
            prop = prop / prop.sum()
            la = (loglik(prop) + dirichlet_logpdf(prop, prior)
                  + dirichlet_logpdf(s0, conc * prop)
                  - loglik(s0) - dirichlet_logpdf(s0, prior)
                  - dirichlet_logpdf(prop, conc * s0))
            ratios.append(min(1.0, np.exp(la)))
        want = float(np.mean(ratios))
        se = float(np.std(ratios) / np.sqrt(len(ratios)))
        se_emp = np.sqrt(want * (1 - want) / n_trials)
        assert abs(emp_rate - want) < 4 * np.sqrt(se ** 2 + se_emp ** 2)

    def test_sum_exactly_one_after_updates(self):
        state, ctx = make_state_ctx()
        for _ in range(200):
            sample_variance_simplex(state, ctx)
            assert abs(state.var_simplex.sum() - 1.0) <= 1e-12


class TestConstrainedLags:
    def test_weights_stay_on_simplex(self):
        state, ctx = make_state_ctx(spec_kw={"constrained_lags": True})
        state.alpha_ind = np.full_like(state.alpha_ind, 1.0 / state.alpha_ind.shape[-1])
        for _ in range(300):
            sample_constrained_lags(state, ctx)
            assert np.all(state.alpha_ind >= 0)
            np.testing.assert_allclose(state.alpha_ind.sum(axis=2), 1.0, atol=1e-12)

    def test_lag_zero_single_weight_fixed(self):
        state, ctx = make_state_ctx(truth_kw={"L": 0, "T": 40},
                                    spec_kw={"constrained_lags": True})
        state.alpha_ind = np.full_like(state.alpha_ind, 1.0)
        for _ in range(10):
            sample_constrained_lags(state, ctx)
        np.testing.assert_array_equal(state.alpha_ind, 1.0)

    def test_stationary_matches_grid_quadrature(self):
        # one individual, second covariate block zeroed out: the first
        # block's weights have posterior prop. to Dir(w; a) * N(y | X w, tau2)
        # on the 2-simplex, integrable on a grid
        state, ctx = make_state_ctx(
            truth_kw={"n": 1, "J": 2, "T": 34, "L": 2, "seed": 21},
            spec_kw={"constrained_lags": True, "weight_concentration": 30.0})
        ctx.X[1] = 0.0
        rng = np.random.default_rng(77)
        tau2 = 0.4
        state.var_simplex = np.array([0.6, tau2])
        u = ctx.usable[0]
        w_true = np.array([0.5, 0.3, 0.2])
        yvals = ctx.X[0, 0] @ w_true + 0.3 * rng.standard_normal(ctx.X.shape[2])
        state.y[0, 0][u] = yvals[u]
        state.alpha_ind[:] = 1.0 / 3.0

        # grid quadrature oracle over the simplex
        a = ctx.spec.lag_weight_concentration
        step = 0.005
        g = np.arange(step / 2, 1.0, step)
        w1, w2 = np.meshgrid(g, g, indexing="ij")
        keep = (w1 + w2) < 1.0
        w1, w2 = w1[keep], w2[keep]
        w3 = 1.0 - w1 - w2
        W = np.stack([w1, w2, w3], axis=1)
        X = ctx.X[0, 0][u]
        resid = state.y[0, 0][u][None, :] - W @ X.T
        logp = (-0.5 * (resid ** 2).sum(axis=1) / tau2
                + ((a - 1.0) * np.log(W)).sum(axis=1))
        p = np.exp(logp - logp.max())
        want = (W * p[:, None]).sum(axis=0) / p.sum()

        burn, keep_n = 2000, 30000
        acc = np.zeros(3)
        for it in range(burn + keep_n):
            sample_constrained_lags(state, ctx)
            if it >= burn:
                acc += state.alpha_ind[0, 0]
        got = acc / keep_n
        np.testing.assert_allclose(got, want, atol=0.015)


class TestZtilde:
    def test_draws_respect_intervals(self):
        state, ctx = make_state_ctx()
        edges = state.threshold_edges()
        for _ in range(25):
            sample_ztilde(state, ctx)
            assert not state.problems(observed=ctx.observed, values=ctx.values)

    def test_missing_cells_imputed_unconstrained(self):
        state, ctx = make_state_ctx(truth_kw={"missing_rate": 0.3})
        assert int(ctx.missing.sum()) > 0
        sample_ztilde(state, ctx)
        assert np.all(np.isfinite(state.ztilde[ctx.missing]))
