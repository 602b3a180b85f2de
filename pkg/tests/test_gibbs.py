"""Tests for standardization, the four Gibbs steppers, and chain running."""

import numpy as np
import pytest

from negfused.gibbs import (
    ChainSettings,
    GibbsState,
    Hyperparameters,
    RegressionData,
    initial_state,
    run_chain,
    standardize,
    step_bayesian_fused_lasso,
    step_bayesian_lasso,
    step_neg_fused,
    step_neg_lasso,
)
from negfused.graphs import FusionGraph


def _toy_regression(seed=0, n=40, p=8, sigma=0.5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    beta = np.concatenate([np.full(p // 2, 2.0), np.zeros(p - p // 2)])
    y = x @ beta + sigma * rng.standard_normal(n)
    return RegressionData(y, x), beta


class TestStandardize:
    def test_output_invariants(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(-3.0, 5.0, (30, 4)) * np.array([1.0, 10.0, 0.1, 100.0])
        y = rng.standard_normal(30) + 7.0
        data, _ = standardize(y, x)
        assert data.y.mean() == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(data.x.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose((data.x**2).sum(axis=0), 30.0, rtol=1e-12)

    def test_prediction_round_trip(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-2.0, 2.0, (25, 3)) + np.array([5.0, -1.0, 0.0])
        y = rng.standard_normal(25)
        data, tf = standardize(y, x)
        beta = np.array([0.7, -1.2, 0.4])
        direct = y.mean() + data.x @ beta
        np.testing.assert_allclose(tf.predict(x, beta), direct, atol=1e-10)

    def test_raw_coefficients_reproduce_fit(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(0.0, 10.0, (20, 2))
        y = rng.standard_normal(20) + 3.0
        data, tf = standardize(y, x)
        beta = np.array([1.5, -0.5])
        raw, intercept = tf.raw_coefficients(beta)
        np.testing.assert_allclose(intercept + x @ raw, y.mean() + data.x @ beta, atol=1e-10)

    def test_zero_variance_column_named(self):
        x = np.ones((10, 3))
        x[:, 0] = np.arange(10.0)
        x[:, 2] = np.arange(10.0) ** 2
        with pytest.raises(ValueError, match="column 1"):
            standardize(np.zeros(10), x)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            standardize(np.zeros(5), np.zeros((6, 2)))


class TestHyperparameters:
    def test_validation(self):
        with pytest.raises(ValueError):
            Hyperparameters(lam1=0.0)
        with pytest.raises(ValueError):
            Hyperparameters(lam1=1.0, lam2=-1.0)
        with pytest.raises(ValueError):
            Hyperparameters(lam1=1.0, noise_df=0.0)

    def test_require_per_model(self):
        hp = Hyperparameters(lam1=1.0)
        hp.require("lasso")
        with pytest.raises(ValueError, match="lam2"):
            hp.require("fused")
        with pytest.raises(ValueError, match="gamma2"):
            hp.require("neg_lasso")
        with pytest.raises(ValueError, match="unknown model"):
            hp.require("ridge")
        Hyperparameters(1.0, 2.0, 3.0).require("neg_fused")


class TestRegressionData:
    def test_identity_design(self):
        data = RegressionData(np.arange(4.0))
        assert data.n == 4 and data.p == 4 and data.x is None

    def test_validation(self):
        with pytest.raises(ValueError):
            RegressionData(np.array([1.0, np.nan]))
        with pytest.raises(ValueError):
            RegressionData(np.zeros(3), np.zeros((4, 2)))
        with pytest.raises(ValueError):
            RegressionData(np.zeros((2, 2)))


class TestSteppers:
    @pytest.mark.parametrize("model", ["lasso", "fused", "neg_lasso", "neg_fused"])
    def test_state_stays_valid(self, model):
        data, _ = _toy_regression()
        hp = Hyperparameters(lam1=1.0, lam2=1.0, gamma2=0.5)
        graph = FusionGraph.chain(data.p)
        state = initial_state(model, data, hp, graph)
        rng = np.random.default_rng(5)
        for _ in range(30):
            if model == "lasso":
                state = step_bayesian_lasso(state, data, hp, rng)
            elif model == "fused":
                state = step_bayesian_fused_lasso(state, data, hp, rng)
            elif model == "neg_lasso":
                state = step_neg_lasso(state, data, hp, rng)
            else:
                state = step_neg_fused(state, data, graph, hp, rng)
            assert np.all(np.isfinite(state.beta))
            assert state.sigma2 > 0.0
            assert np.all(state.coef_var > 0.0)
            assert np.all(state.edge_var > 0.0)
            if model in ("neg_lasso", "neg_fused"):
                assert np.all(state.neg_rate > 0.0)

    def test_initial_state_shapes(self):
        data, _ = _toy_regression()
        hp = Hyperparameters(lam1=1.0, lam2=1.0, gamma2=0.5)
        s = initial_state("neg_fused", data, hp, FusionGraph.chain(data.p))
        assert s.edge_var.size == data.p - 1
        assert s.neg_rate.size == data.p - 1
        s = initial_state("neg_lasso", data, hp)
        assert s.neg_rate.size == data.p
        assert s.edge_var.size == 0
        s = initial_state("lasso", data, hp)
        assert s.neg_rate is None

    def test_coef_latent_conditionally_centered(self):
        # given the freshly drawn coefficients, the inverse latent variance has
        # conditional mean lam1 * sqrt(sigma2) / |beta_j|, so the per-step
        # residuals average to zero over the chain
        data, _ = _toy_regression(n=30, p=4)
        hp = Hyperparameters(lam1=2.0)
        state = initial_state("lasso", data, hp)
        rng = np.random.default_rng(11)
        resid = []
        for _ in range(4000):
            state = step_bayesian_lasso(state, data, hp, rng)
            mu = hp.lam1 * np.sqrt(state.sigma2) / np.maximum(np.abs(state.beta), 1e-10)
            resid.append(1.0 / state.coef_var - mu)
        resid = np.array(resid)
        z = resid.mean(axis=0) / (resid.std(axis=0) / np.sqrt(resid.shape[0]))
        assert np.all(np.abs(z) < 5.0)

    def test_neg_rate_conditionally_centered(self):
        # the gamma latent is drawn with mean (lam2 + 1)/(edge_var + gamma2^2)
        # where edge_var is the value updated in the same sweep
        data, _ = _toy_regression(n=30, p=5)
        hp = Hyperparameters(lam1=1.0, lam2=2.0, gamma2=0.7)
        graph = FusionGraph.chain(5)
        state = initial_state("neg_fused", data, hp, graph)
        rng = np.random.default_rng(13)
        resid = []
        for _ in range(4000):
            state = step_neg_fused(state, data, graph, hp, rng)
            m = (hp.lam2 + 1.0) / (state.edge_var + hp.gamma2**2)
            resid.append(state.neg_rate - m)
        resid = np.array(resid)
        z = resid.mean(axis=0) / (resid.std(axis=0) / np.sqrt(resid.shape[0]))
        assert np.all(np.abs(z) < 5.0)


class TestChainBehaviour:
    def test_vanishing_shrinkage_approaches_least_squares(self):
        data, _ = _toy_regression(seed=7, n=80, p=5, sigma=0.3)
        ols, *_ = np.linalg.lstsq(data.x, data.y, rcond=None)
        hp = Hyperparameters(lam1=1e-6)
        s = run_chain(
            "lasso",
            data,
            hp,
            settings=ChainSettings(iterations=4000, burnin=1000),
            seed=3,
            backend="numpy",
        )
        np.testing.assert_allclose(s.beta_mean, ols, atol=0.02)

    def test_vanishing_fusion_matches_lasso(self):
        data, _ = _toy_regression(seed=9, n=60, p=6)
        settings = ChainSettings(iterations=4000, burnin=1000)
        a = run_chain("lasso", data, Hyperparameters(lam1=0.5), settings=settings, seed=1)
        b = run_chain(
            "fused", data, Hyperparameters(lam1=0.5, lam2=1e-8), settings=settings, seed=1
        )
        np.testing.assert_allclose(a.beta_mean, b.beta_mean, atol=0.08)

    def test_noise_variance_recovery(self):
        data, beta = _toy_regression(seed=21, n=200, p=4, sigma=0.7)
        s = run_chain(
            "lasso",
            data,
            Hyperparameters(lam1=0.05),
            settings=ChainSettings(iterations=3000, burnin=1000),
            seed=2,
        )
        assert s.sigma2_mean == pytest.approx(0.49, rel=0.35)


class TestRunChain:
    def test_bitwise_determinism_per_backend(self):
        data, _ = _toy_regression()
        hp = Hyperparameters(1.0, 1.0, 0.5)
        settings = ChainSettings(iterations=200, burnin=50)
        for backend in ("numba", "numpy"):
            a = run_chain("neg_fused", data, hp, settings=settings, seed=9, backend=backend)
            b = run_chain("neg_fused", data, hp, settings=settings, seed=9, backend=backend)
            np.testing.assert_array_equal(a.beta_mean, b.beta_mean)
            np.testing.assert_array_equal(a.beta_draws, b.beta_draws)
            assert a.sigma2_mean == b.sigma2_mean

    def test_seed_changes_draws(self):
        data, _ = _toy_regression()
        hp = Hyperparameters(1.0)
        settings = ChainSettings(iterations=100, burnin=10)
        a = run_chain("lasso", data, hp, settings=settings, seed=1)
        b = run_chain("lasso", data, hp, settings=settings, seed=2)
        assert not np.array_equal(a.beta_mean, b.beta_mean)

    def test_backend_agreement(self):
        data, _ = _toy_regression(seed=17, n=50, p=6)
        hp = Hyperparameters(1.0, 0.5, 0.5)
        settings = ChainSettings(iterations=4000, burnin=1000)
        nb = run_chain("neg_fused", data, hp, settings=settings, seed=4, backend="numba")
        np_ = run_chain("neg_fused", data, hp, settings=settings, seed=4, backend="numpy")
        np.testing.assert_allclose(nb.beta_mean, np_.beta_mean, atol=0.08)
        assert nb.sigma2_mean == pytest.approx(np_.sigma2_mean, rel=0.2)

    def test_banded_and_dense_kernels_agree(self):
        rng = np.random.default_rng(23)
        signal = np.repeat([0.0, 2.0, 0.0], 20)
        y = signal + 0.4 * rng.standard_normal(60)
        hp = Hyperparameters(0.1, 1.0, 0.5)
        settings = ChainSettings(iterations=3000, burnin=1000)
        graph = FusionGraph.chain(60)
        banded = run_chain("neg_fused", RegressionData(y), hp, graph, settings, seed=5,
                           backend="numba")
        dense = run_chain("neg_fused", RegressionData(y, np.eye(60)), hp, graph, settings,
                          seed=5, backend="numba")
        np.testing.assert_allclose(banded.beta_mean, dense.beta_mean, atol=0.1)

    def test_retention_accounting(self):
        data, _ = _toy_regression()
        hp = Hyperparameters(1.0)
        s = run_chain(
            "lasso",
            data,
            hp,
            settings=ChainSettings(iterations=103, burnin=10, thin=7),
            seed=0,
        )
        assert s.n_retained == 14  # ceil(93 / 7)
        assert s.beta_draws.shape == (14, data.p)
        assert s.sigma2_draws.shape == (14,)

    def test_storage_cap_subsamples_uniformly(self):
        data, _ = _toy_regression()
        hp = Hyperparameters(1.0)
        s = run_chain(
            "lasso",
            data,
            hp,
            settings=ChainSettings(iterations=1100, burnin=100, max_stored=100),
            seed=0,
        )
        assert s.n_retained == 1000
        assert s.beta_draws.shape == (100, data.p)

    def test_no_storage_means_only(self):
        data, _ = _toy_regression()
        s = run_chain(
            "lasso",
            data,
            Hyperparameters(1.0),
            settings=ChainSettings(iterations=100, burnin=10, max_stored=0),
            seed=0,
        )
        assert s.beta_draws is None
        assert np.all(np.isfinite(s.beta_mean))
        with pytest.raises(ValueError, match="median"):
            s.point_estimate("median")

    def test_point_estimates(self):
        data, _ = _toy_regression()
        s = run_chain(
            "lasso",
            data,
            Hyperparameters(1.0),
            settings=ChainSettings(iterations=300, burnin=100),
            seed=0,
        )
        np.testing.assert_array_equal(s.point_estimate(), s.beta_mean)
        med = s.point_estimate("median")
        np.testing.assert_array_equal(med, np.median(s.beta_draws, axis=0))
        with pytest.raises(ValueError):
            s.point_estimate("mode")

    def test_mean_equals_draw_average_when_uncapped(self):
        data, _ = _toy_regression()
        s = run_chain(
            "lasso",
            data,
            Hyperparameters(1.0),
            settings=ChainSettings(iterations=400, burnin=100),
            seed=6,
        )
        np.testing.assert_allclose(s.beta_mean, s.beta_draws.mean(axis=0), atol=1e-12)

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            ChainSettings(iterations=0)
        with pytest.raises(ValueError):
            ChainSettings(iterations=10, burnin=10)
        with pytest.raises(ValueError):
            ChainSettings(iterations=10, burnin=-1)
        with pytest.raises(ValueError):
            ChainSettings(iterations=10, burnin=0, thin=0)

    def test_model_and_graph_validation(self):
        data, _ = _toy_regression()
        with pytest.raises(ValueError, match="unknown model"):
            run_chain("ridge", data, Hyperparameters(1.0))
        with pytest.raises(ValueError, match="nodes"):
            run_chain(
                "neg_fused",
                data,
                Hyperparameters(1.0, 1.0, 1.0),
                graph=FusionGraph.chain(3),
            )
        with pytest.raises(ValueError, match="chain"):
            run_chain(
                "fused",
                data,
                Hyperparameters(1.0, 1.0),
                graph=FusionGraph.complete(data.p),
            )

    def test_unknown_backend_rejected(self):
        data, _ = _toy_regression()
        with pytest.raises(ValueError, match="backend"):
            run_chain("lasso", data, Hyperparameters(1.0), backend="fortran")
