import numpy as np
import pytest
from scipy import special

from diffuq import baselines, targets
from diffuq.baselines import (SampleBank, dropout_params, ensemble_fit,
                              load_bank, map_fit, mc_dropout_fit,
                              mc_dropout_sample, mfvi_fit, mfvi_sample,
                              sgld_sample, svgd_sample, svgd_step)
from diffuq.data import Dataset
from diffuq.errors import DataError, DimensionError
from diffuq.nets import NetLayout, init_params
from diffuq.optim import OptimizerConfig
from diffuq.regression import HeteroModel, preset


class TestSampleBank:
    def test_csv_round_trip_exact(self, rng, tmp_path):
        bank = SampleBank(rng.normal(size=(7, 3)), method="sgld",
                          meta={"step_size": 0.01})
        path = tmp_path / "bank.csv"
        bank.save_csv(path)
        again = load_bank(path)
        np.testing.assert_array_equal(again.samples, bank.samples)
        assert again.method == "sgld"
        assert again.meta == {"step_size": 0.01}

    def test_load_without_sidecar(self, tmp_path):
        path = tmp_path / "naked.csv"
        path.write_text("theta0,theta1\n1.0,2.0\n")
        bank = load_bank(path)
        np.testing.assert_array_equal(bank.samples, [[1.0, 2.0]])
        assert bank.method == ""

    def test_rejects_non_bank_csv(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("x0,y\n1.0,2.0\n")
        with pytest.raises(DataError):
            load_bank(path)

    def test_single_vector_promoted(self):
        bank = SampleBank(np.zeros(4), method="map")
        assert bank.samples.shape == (1, 4)


class TestMap:
    def test_finds_gaussian_mode(self):
        target = targets.full_gaussian([1.0, -2.0],
                                       [[1.0, 0.6], [0.6, 2.0]])
        theta = map_fit(target, OptimizerConfig(learning_rate=0.05,
                                                max_iter=800), seed=0)
        np.testing.assert_allclose(theta, [1.0, -2.0], atol=1e-3)

    def test_linear_posterior_mode_is_conjugate_mean(self, rng):
        X = rng.normal(size=(25, 2))
        y = X @ np.array([0.5, -1.0]) + 0.1 * rng.normal(size=25)
        target = targets.linear_regression_posterior(X, y, 0.01, 1.0)
        mean, _ = targets.conjugate_linear_posterior(X, y, 0.01, 1.0)
        theta = map_fit(target, OptimizerConfig(learning_rate=0.05,
                                                max_iter=1500), seed=1)
        np.testing.assert_allclose(theta, mean, atol=1e-4)

    def test_deterministic_and_init_override(self):
        target = targets.diag_gaussian([2.0], 1.0)
        opt = OptimizerConfig(learning_rate=0.1, max_iter=50)
        assert map_fit(target, opt, seed=3) == pytest.approx(
            map_fit(target, opt, seed=3))
        out = map_fit(target, opt, init=np.array([1.9]))
        np.testing.assert_allclose(out, [2.0], atol=1e-2)
        with pytest.raises(DimensionError):
            map_fit(target, opt, init=np.zeros(2))


class TestEnsemble:
    def test_members_differ_and_are_deterministic(self):
        target = targets.diag_gaussian([0.0, 0.0], 1.0)
        opt = OptimizerConfig(learning_rate=0.1, max_iter=30)
        bank = ensemble_fit(target, 4, opt, seed=5)
        assert bank.samples.shape == (4, 2)
        assert bank.method == "ensemble"
        # partial convergence keeps the members distinct
        assert len({tuple(r) for r in np.round(bank.samples, 12)}) == 4
        again = ensemble_fit(target, 4, opt, seed=5)
        np.testing.assert_array_equal(bank.samples, again.samples)


class TestSgld:
    def test_stationary_variance_of_discrete_chain(self):
        # for N(0,1): theta' = (1 - eps/2) theta + sqrt(eps) xi
        # stationary variance = 1 / (1 - eps/4)
        eps = 0.5
        target = targets.diag_gaussian([0.0], 1.0)
        bank = sgld_sample(target, eps, n_steps=20000, burn_in=0.5, thin=1,
                           seed=0)
        v_exact = 1.0 / (1.0 - eps / 4.0)
        np.testing.assert_allclose(bank.samples.var(), v_exact, rtol=0.12)
        np.testing.assert_allclose(bank.samples.mean(), 0.0, atol=0.08)

    def test_burn_in_and_thinning_counts(self):
        target = targets.diag_gaussian([0.0], 1.0)
        bank = sgld_sample(target, 0.1, n_steps=100, burn_in=0.5, thin=5,
                           seed=1)
        assert len(bank) == 10
        assert bank.meta["thin"] == 5

    def test_deterministic(self):
        target = targets.diag_gaussian([1.0], 2.0)
        a = sgld_sample(target, 0.2, n_steps=200, seed=4)
        b = sgld_sample(target, 0.2, n_steps=200, seed=4)
        np.testing.assert_array_equal(a.samples, b.samples)
        c = sgld_sample(target, 0.2, n_steps=200, seed=5)
        assert not np.array_equal(a.samples, c.samples)

    def test_minibatch_posterior_runs_deterministically(self, rng):
        model = preset("pensim", 1)
        post = targets.PosteriorTarget(model, rng.normal(size=(12, 1)),
                                       rng.normal(size=12))
        a = sgld_sample(post, 1e-4, n_steps=50, seed=2, data_minibatch=4)
        b = sgld_sample(post, 1e-4, n_steps=50, seed=2, data_minibatch=4)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_validates_arguments(self):
        target = targets.diag_gaussian([0.0], 1.0)
        with pytest.raises(ValueError):
            sgld_sample(target, -0.1, n_steps=10)
        with pytest.raises(ValueError):
            sgld_sample(target, 0.1, n_steps=10, burn_in=1.0)
        with pytest.raises(ValueError):
            sgld_sample(target, 0.1, n_steps=10, burn_in=0.99)


class TestSvgd:
    def test_single_particle_is_gradient_ascent(self):
        target = targets.diag_gaussian([3.0, -1.0], 2.0)
        p = np.array([[0.5, 0.5]])
        out = svgd_step(p, target, step_size=0.1, bandwidth=1.0)
        expected = p + 0.1 * target.grad_logp(p)
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_close_particles_repel(self):
        target = targets.diag_gaussian([0.0], 1e6)  # essentially flat
        p = np.array([[-0.1], [0.1]])
        out = svgd_step(p, target, step_size=0.5)
        assert out[1, 0] - out[0, 0] > 0.2

    def test_matches_gaussian_moments(self):
        target = targets.diag_gaussian([2.0], 0.49)
        bank = svgd_sample(target, 40, n_steps=800, step_size=0.2, seed=0)
        assert bank.method == "svgd"
        np.testing.assert_allclose(bank.samples.mean(), 2.0, atol=0.06)
        np.testing.assert_allclose(bank.samples.var(), 0.49, rtol=0.2)

    def test_deterministic(self):
        target = targets.diag_gaussian([0.0, 1.0], 1.0)
        a = svgd_sample(target, 10, n_steps=50, step_size=0.1, seed=3)
        b = svgd_sample(target, 10, n_steps=50, step_size=0.1, seed=3)
        np.testing.assert_array_equal(a.samples, b.samples)


class TestMfvi:
    def test_recovers_diagonal_gaussian(self):
        target = targets.diag_gaussian([1.0, -1.0], [0.25, 4.0])
        mean, log_sd = mfvi_fit(target, OptimizerConfig(learning_rate=0.02,
                                                        max_iter=4000), seed=0)
        np.testing.assert_allclose(mean, [1.0, -1.0], atol=0.1)
        np.testing.assert_allclose(log_sd, [np.log(0.5), np.log(2.0)],
                                   atol=0.15)

    def test_precision_matching_on_correlated_gaussian(self):
        # the factorized fit matches precisions: q variance -> 1 / Lambda_ii,
        # well below the true marginal variance when correlation is strong
        cov = np.array([[1.0, 0.9], [0.9, 1.0]])
        target = targets.full_gaussian([0.0, 0.0], cov)
        _, log_sd = mfvi_fit(target, OptimizerConfig(learning_rate=0.02,
                                                     max_iter=4000), seed=1)
        q_var = np.exp(2 * log_sd)
        lam = np.linalg.inv(cov)
        np.testing.assert_allclose(q_var, 1.0 / np.diag(lam), rtol=0.25)
        assert np.all(q_var < 0.5)  # true marginals are 1.0

    def test_sample_bank_moments(self):
        mean = np.array([1.0, -2.0])
        log_sd = np.log([0.5, 1.5])
        bank = mfvi_sample(mean, log_sd, 4000, seed=0)
        np.testing.assert_allclose(bank.samples.mean(axis=0), mean, atol=0.06)
        np.testing.assert_allclose(bank.samples.std(axis=0), [0.5, 1.5],
                                   rtol=0.05)
        again = mfvi_sample(mean, log_sd, 4000, seed=0)
        np.testing.assert_array_equal(bank.samples, again.samples)


class TestMcDropout:
    def small_model(self):
        return HeteroModel(NetLayout(1, 1, (2,)), NetLayout(1, 1, ()))

    def test_mask_rewrites_next_layer_rows(self):
        model = self.small_model()
        # mean net: W0 (1x2) = [a, b], b0 = [c, d], W1 (2x1) = [e, f], b1 = [g]
        theta = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0,
                          0.5, 0.25])  # last two: linear precision net
        masked = dropout_params(model, theta, [np.array([1.0, 0.0])], 0.5)
        expected = np.array([1.0, 2.0, 3.0, 4.0, 10.0, 0.0, 7.0, 0.5, 0.25])
        np.testing.assert_array_equal(masked, expected)

    def test_zero_rate_with_full_mask_is_identity(self, rng):
        model = preset("hlt", 1)
        theta = rng.normal(size=model.param_dim)
        masks = [np.ones(w) for w in model.mean_layout.hidden]
        np.testing.assert_array_equal(dropout_params(model, theta, masks, 0.0),
                                      theta)

    def test_parameter_masking_equals_activation_masking(self, rng):
        from diffuq.nets import mlp_forward
        from scipy.special import erf

        model = preset("hlt", 1)
        theta = rng.normal(size=model.param_dim) * 0.5
        rate = 0.25
        mask = (rng.uniform(size=32) >= rate).astype(float)
        x = rng.normal(size=(6, 1))

        masked_theta = dropout_params(model, theta, [mask], rate)
        got = mlp_forward(model.mean_layout, masked_theta[:model.mean_dim], x)

        w0 = theta[:32].reshape(1, 32)
        b0 = theta[32:64]
        w1 = theta[64:96].reshape(32, 1)
        b1 = theta[96]
        h = x @ w0 + b0
        h = h * 0.5 * (1 + erf(h / np.sqrt(2)))
        h = h * mask / (1 - rate)
        expected = h @ w1 + b1
        np.testing.assert_allclose(got, expected, rtol=1e-12)

    def test_mask_count_validated(self):
        model = self.small_model()
        with pytest.raises(DimensionError):
            dropout_params(model, np.zeros(model.param_dim), [], 0.1)
        with pytest.raises(ValueError):
            dropout_params(model, np.zeros(model.param_dim),
                           [np.ones(2)], 1.0)

    def test_fit_and_sample(self, rng):
        model = self.small_model()
        ds = Dataset(rng.normal(size=(20, 1)),
                     rng.normal(size=20) * 0.1 + 1.0)
        opt = OptimizerConfig(learning_rate=0.05, max_iter=150)
        theta = mc_dropout_fit(model, ds, rate=0.1, opt=opt, seed=0)
        assert np.all(np.isfinite(theta))
        np.testing.assert_array_equal(
            theta, mc_dropout_fit(model, ds, rate=0.1, opt=opt, seed=0))

        bank = mc_dropout_sample(model, theta, 16, rate=0.1, seed=0)
        assert bank.samples.shape == (16, model.param_dim)
        assert len(np.unique(bank.samples[:, -1])) == 1  # precision untouched

        no_drop = mc_dropout_sample(model, theta, 4, rate=0.0, seed=0)
        for row in no_drop.samples:
            np.testing.assert_array_equal(row, theta)
