#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Tests for the Bayesian mismatch model: sampling, forward pass, ELBO and training
"""

import math
import os
import sys
import unittest
from pathlib import Path

import numpy as np

# Add repository root to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from src import autodiff as ad
from src.bnn import (
    HEAD_PARAM_COUNT,
    HEAD_SHAPES,
    BnnModel,
    FrozenPosterior,
    GaussianPrior,
    MixturePrior,
    VariationalPosterior,
    elbo_gradients,
    elbo_loss,
    forward,
    gaussian_log_density,
    gaussian_nll,
    gaussian_nll_numpy,
    init_ann,
    inverse_softplus,
    mc_draws,
    mc_stats,
    predict_interval,
    pretrain_ann,
    sample_weights,
    summarize_draws,
    train_bnn,
    validation_nll,
)
from src.errors import ContractViolation, TrainingDivergedError
from src.plant import TransitionDataset
from tests.gradcheck import gradient_mismatch, numeric_gradient

SLOW = os.environ.get("ASMPC_SLOW_TESTS") == "1"


def random_bnn(seed: int, rho: float = -3.0) -> BnnModel:
    rng = np.random.default_rng(seed)
    ann = init_ann(seed)
    head = VariationalPosterior(
        mu_w=rng.normal(scale=0.3, size=HEAD_SHAPES["w"]), rho_w=np.full(HEAD_SHAPES["w"], rho),
        mu_b=rng.normal(scale=0.3, size=HEAD_SHAPES["b"]), rho_b=np.full(HEAD_SHAPES["b"], rho),
    )
    body = [(w + rng.normal(scale=0.1, size=w.shape), b + rng.normal(scale=0.1, size=b.shape)) for w, b in ann.body]
    return BnnModel(body=body, head=head)


def linear_mismatch_data(n: int, seed: int) -> TransitionDataset:
    """g = H [x1, x1*x2, u1, u2] with a constant H"""
    rng = np.random.default_rng(seed)
    H = np.array([[0.2, -0.1, 0.05, 0.3], [-0.15, 0.1, 0.2, -0.05]])
    x = rng.uniform(-1.0, 1.0, size=(n, 2))
    u = rng.uniform(-1.0, 1.0, size=(n, 2))
    reg = np.column_stack([x[:, 0], x[:, 0] * x[:, 1], u])
    return TransitionDataset(x=x, u=u, x_next=np.zeros_like(x), g=reg @ H.T)


def hand_forward(m: BnnModel, w: np.ndarray, b: np.ndarray, x, u) -> np.ndarray:
    h = np.asarray(x, dtype=np.float64)
    for layer_w, layer_b in m.body:
        z = h @ layer_w + layer_b.reshape(-1)
        h = np.array([v if v > 0 else math.expm1(v) for v in z])
    out = h @ w + b.reshape(-1)
    regressor = np.array([x[0], x[0] * x[1], u[0], u[1]])
    return np.array([out[0:4] @ regressor, out[4:8] @ regressor])


class TestSampleWeights(unittest.TestCase):

    def test_degenerate_posterior_returns_mean(self):
        mu = {"w": np.arange(6.0).reshape(2, 3)}
        rho = {"w": np.full((2, 3), -1000.0)}
        draw = sample_weights(mu, rho, rng=np.random.default_rng(0))
        np.testing.assert_array_equal(draw["w"].numpy(), mu["w"])

    def test_standard_normal_statistics(self):
        mu = {"w": np.zeros((1000, 100))}
        rho = {"w": np.full((1000, 100), inverse_softplus(1.0))}
        values = sample_weights(mu, rho, rng=np.random.default_rng(1))["w"].numpy()
        self.assertLess(abs(values.mean()), 0.02)
        self.assertLess(abs(values.std() - 1.0), 0.02)

    def test_gradient_passes_through_mean(self):
        tape = ad.Tape()
        mu = tape.watch(np.array([[0.3, -0.2]]))
        rho = tape.watch(np.array([[0.1, 0.5]]))
        w = sample_weights({"w": mu}, {"w": rho}, rng=np.random.default_rng(2))["w"]
        loss = ad.sum(ad.square(w))
        grads = tape.backward(loss)
        np.testing.assert_allclose(grads[mu], 2.0 * w.numpy(), atol=1e-12)

    def test_needs_noise_source(self):
        with self.assertRaises(ContractViolation):
            sample_weights({"w": np.zeros(2)}, {"w": np.zeros(2)})


class TestForward(unittest.TestCase):

    def setUp(self):
        self.m = random_bnn(3)

    def test_zero_regressor_gives_zero(self):
        w, b = np.random.default_rng(4).normal(size=(8, 8)), np.random.default_rng(5).normal(size=(1, 8))
        np.testing.assert_array_equal(forward(self.m, (0.0, 0.0), (0.0, 0.0), {"w": w, "b": b}), [[0.0, 0.0]])

    def test_zero_head_gives_zero(self):
        weights = {"w": np.zeros((8, 8)), "b": np.zeros((1, 8))}
        np.testing.assert_array_equal(forward(self.m, (0.7, -0.3), (0.2, 0.9), weights), [[0.0, 0.0]])

    def test_matches_hand_rolled_network(self):
        rng = np.random.default_rng(6)
        for _ in range(5):
            x, u = rng.normal(size=2), rng.normal(size=2)
            w, b = rng.normal(size=(8, 8)), rng.normal(size=(1, 8))
            np.testing.assert_allclose(forward(self.m, x, u, {"w": w, "b": b})[0],
                                       hand_forward(self.m, w, b, x, u), atol=1e-12)

    def test_mean_prediction_uses_posterior_mean(self):
        x, u = np.array([0.4, 1.2]), np.array([-0.3, 0.6])
        np.testing.assert_allclose(forward(self.m, x, u)[0],
                                   hand_forward(self.m, self.m.head.mu_w, self.m.head.mu_b, x, u), atol=1e-12)

    def test_linear_in_input(self):
        x = np.array([0.5, 2.0])
        u1, u2 = np.array([0.3, -0.4]), np.array([-0.1, 0.8])
        g = lambda u: forward(self.m, x, u)[0]  # noqa: E731
        np.testing.assert_allclose(g(u1 + u2) - g(u1) - g(u2) + g(np.zeros(2)), np.zeros(2), atol=1e-12)

    def test_rejects_misshaped_weights(self):
        with self.assertRaises(ContractViolation):
            forward(self.m, (0.1, 0.1), (0.1, 0.1), {"w": np.zeros((8, 4)), "b": np.zeros((1, 8))})

    def test_degenerate_posterior_equals_ann(self):
        ann = init_ann(8)
        m = BnnModel.from_ann(ann, rho_init=-1000.0)
        x = np.random.default_rng(9).normal(size=(10, 2))
        u = np.random.default_rng(10).normal(size=(10, 2))
        draws = mc_draws(m, x, u, n_mc=5, seed=0)
        for draw in draws:
            np.testing.assert_array_equal(draw, ann.predict(x, u))


class TestPosterior(unittest.TestCase):

    def test_vector_layout(self):
        post = random_bnn(11).head
        vector = post.to_vector()
        self.assertEqual(vector.size, HEAD_PARAM_COUNT)
        np.testing.assert_array_equal(vector[:64], post.mu_w.reshape(-1))
        np.testing.assert_array_equal(VariationalPosterior.from_vector(vector).rho_b, post.rho_b)

    def test_sigma_positive(self):
        post = random_bnn(12, rho=-30.0).head
        self.assertTrue(np.all(post.sigma_w > 0))

    def test_wrong_vector_length(self):
        with self.assertRaises(ContractViolation):
            VariationalPosterior.from_vector(np.zeros(10))

    def test_frozen_copy_is_immutable(self):
        post = random_bnn(13).head
        frozen = post.freeze()
        self.assertIsInstance(frozen, FrozenPosterior)
        with self.assertRaises(ValueError):
            frozen.mu["w"][0, 0] = 1.0


class TestElbo(unittest.TestCase):

    def test_matched_densities_have_zero_complexity(self):
        rng = np.random.default_rng(14)
        w = ad.Tensor(rng.normal(size=(3, 2)))
        log_q = gaussian_log_density(w, 0.0, 1.0)
        log_p = GaussianPrior(1.0).log_prob({"w": w})
        self.assertAlmostEqual(log_q.item() - log_p.item(), 0.0, places=12)

    def test_nll_constant_at_unit_noise(self):
        target = np.array([[0.3, -0.2]])
        self.assertAlmostEqual(gaussian_nll_numpy(target, target, 1.0) / 2, 0.5 * math.log(2 * math.pi), places=12)
        self.assertAlmostEqual(gaussian_nll(ad.Tensor(target), target, 1.0).item() / 2, 0.9189, places=4)

    def test_complexity_non_negative_on_average(self):
        rng = np.random.default_rng(15)
        mu, sigma = np.array([[0.2, -0.1]]), np.array([[0.5, 0.3]])
        prior = MixturePrior()
        total = 0.0
        draws = 10000
        for _ in range(draws):
            w = ad.Tensor(mu + sigma * rng.standard_normal(mu.shape))
            total += gaussian_log_density(w, mu, sigma).item() - prior.log_prob({"w": w}).item()
        self.assertGreaterEqual(total / draws, -0.05)

    def test_gradients_match_finite_differences(self):
        m = random_bnn(16, rho=-1.0)
        batch = linear_mismatch_data(6, seed=17)
        rng = np.random.default_rng(18)
        noise = [{"w": rng.standard_normal(HEAD_SHAPES["w"]), "b": rng.standard_normal(HEAD_SHAPES["b"])}
                 for _ in range(2)]
        kwargs = dict(n_samples=2, kl_weight=0.3, sigma_obs=0.5, noise=noise)
        _, grads = elbo_gradients(m, batch, **kwargs)

        params = m.parameters()
        for name in ("head.mu_w", "head.rho_b", "body.0.w", "body.1.b"):
            def loss_at(value, name=name):
                changed = dict(params)
                changed[name] = value
                return elbo_loss(m.with_parameters(changed), batch, **kwargs).item()

            with self.subTest(parameter=name):
                numeric = numeric_gradient(loss_at, params[name])
                self.assertLess(gradient_mismatch(grads[name], numeric, atol=1e-6), 1e-4)

    def test_empty_batch_rejected(self):
        empty = TransitionDataset(x=np.zeros((0, 2)), u=np.zeros((0, 2)), x_next=np.zeros((0, 2)),
                                  g=np.zeros((0, 2)))
        with self.assertRaises(ContractViolation):
            elbo_loss(random_bnn(0), empty, 1, 1.0, rng=np.random.default_rng(0))

    def test_batch_without_targets_rejected(self):
        d = linear_mismatch_data(4, seed=0)
        no_g = TransitionDataset(x=d.x, u=d.u, x_next=d.x_next)
        with self.assertRaises(ContractViolation):
            elbo_loss(random_bnn(0), no_g, 1, 1.0, rng=np.random.default_rng(0))


class TestMonteCarlo(unittest.TestCase):

    def test_summary_uses_population_std(self):
        mean, std = summarize_draws([1.0, 2.0, 3.0])
        self.assertAlmostEqual(float(mean), 2.0)
        self.assertAlmostEqual(float(std), math.sqrt(2.0 / 3.0), places=12)

    def test_summary_needs_two_draws(self):
        with self.assertRaises(ContractViolation):
            summarize_draws([1.0])

    def test_degenerate_posterior_has_zero_spread(self):
        m = random_bnn(19, rho=-1000.0)
        x, u = np.array([0.3, 1.5]), np.array([0.2, -0.4])
        mean, std = mc_stats(m, x, u, n_mc=20, seed=1)
        np.testing.assert_allclose(std, [0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(mean, m.mean_predict(x, u)[0], atol=1e-14)

    def test_zero_regressor_statistics(self):
        mean, std = mc_stats(random_bnn(20), np.zeros(2), np.zeros(2), n_mc=10, seed=0)
        np.testing.assert_array_equal(mean, [0.0, 0.0])
        np.testing.assert_array_equal(std, [0.0, 0.0])

    def test_worker_count_does_not_change_draws(self):
        m = random_bnn(21)
        x = np.random.default_rng(22).normal(size=(4, 2))
        u = np.random.default_rng(23).normal(size=(4, 2))
        sequential = mc_draws(m, x, u, n_mc=12, seed=[6, 3])
        parallel = mc_draws(m, x, u, n_mc=12, seed=[6, 3], workers=4)
        np.testing.assert_array_equal(sequential, parallel)
        self.assertFalse(np.array_equal(sequential, mc_draws(m, x, u, n_mc=12, seed=[6, 4])))

    def test_interval_brackets_mean(self):
        m = random_bnn(24)
        mean, lower, upper = predict_interval(m, (0.5, 1.0), (0.1, 0.1), n_mc=30, seed=0)
        self.assertTrue(np.all(lower <= mean) and np.all(mean <= upper))
        _, std = mc_stats(m, (0.5, 1.0), (0.1, 0.1), n_mc=30, seed=0)
        np.testing.assert_allclose(upper - lower, 4.0 * std, atol=1e-12)

    def test_mc_stats_needs_two_draws(self):
        with self.assertRaises(ContractViolation):
            mc_stats(random_bnn(0), (0.1, 0.1), (0.1, 0.1), n_mc=1, seed=0)


class TestTraining(unittest.TestCase):

    def test_pretraining_reduces_mse(self):
        data = linear_mismatch_data(64, seed=25)
        result = pretrain_ann(init_ann(0), data, epochs=60, batch_size=32, lr=1e-2, seed=0)
        self.assertLess(np.mean(result.losses[-5:]), np.mean(result.losses[:5]))

    def test_bnn_loss_trends_down(self):
        data = linear_mismatch_data(64, seed=26)
        m = BnnModel.from_ann(init_ann(1))
        result = train_bnn(m, data, epochs=40, batch_size=32, lr=1e-2, seed=0)
        self.assertEqual(len(result.losses), 40)
        self.assertLess(np.mean(result.losses[-5:]), np.mean(result.losses[:5]))

    def test_body_weights_stay_fixed(self):
        data = linear_mismatch_data(48, seed=33)
        m = BnnModel.from_ann(init_ann(6))
        held_out = linear_mismatch_data(16, seed=34)
        for validation in (None, held_out):
            with self.subTest(validation=validation is not None):
                trained = train_bnn(m, data, epochs=4, batch_size=16, lr=1e-2, seed=2, validation=validation,
                                    eval_every=1).model
                for (w0, b0), (w1, b1) in zip(m.body, trained.body):
                    np.testing.assert_array_equal(w0, w1)
                    np.testing.assert_array_equal(b0, b1)
                self.assertFalse(np.array_equal(m.head.to_vector(), trained.head.to_vector()))

    def test_gradients_restricted_to_trainable_names(self):
        m = random_bnn(35, rho=-2.0)
        batch = linear_mismatch_data(8, seed=36)
        noise = [{"w": np.zeros(HEAD_SHAPES["w"]), "b": np.zeros(HEAD_SHAPES["b"])}]
        _, everything = elbo_gradients(m, batch, n_samples=1, kl_weight=0.1, noise=noise)
        _, head_only = elbo_gradients(m, batch, n_samples=1, kl_weight=0.1, noise=noise,
                                      trainable=["head.mu_w", "head.rho_w"])
        self.assertEqual(sorted(head_only), ["head.mu_w", "head.rho_w"])
        np.testing.assert_allclose(head_only["head.mu_w"], everything["head.mu_w"], rtol=1e-12, atol=1e-14)
        with self.assertRaises(ContractViolation):
            elbo_gradients(m, batch, n_samples=1, kl_weight=0.1, noise=noise, trainable=["body.9.w"])

    def test_keeps_best_held_out_epoch(self):
        data = linear_mismatch_data(48, seed=27)
        held_out = linear_mismatch_data(16, seed=28)
        result = train_bnn(BnnModel.from_ann(init_ann(2)), data, epochs=6, batch_size=16, lr=1e-2,
                           seed=1, validation=held_out, eval_every=2)
        self.assertIn(result.best_epoch, (2, 4, 6))
        self.assertAlmostEqual(result.best_validation_nll, validation_nll(result.model, held_out), places=10)

    def test_same_seed_same_model(self):
        data = linear_mismatch_data(32, seed=29)
        a = train_bnn(BnnModel.from_ann(init_ann(3)), data, epochs=3, seed=5).model
        b = train_bnn(BnnModel.from_ann(init_ann(3)), data, epochs=3, seed=5).model
        np.testing.assert_array_equal(a.head.to_vector(), b.head.to_vector())

    def test_divergence_reports_last_finite_epoch(self):
        data = linear_mismatch_data(16, seed=30)
        with self.assertRaises(TrainingDivergedError) as ctx:
            train_bnn(BnnModel.from_ann(init_ann(4)), data, epochs=3, batch_size=32, lr=1e200, seed=0)
        self.assertEqual(ctx.exception.last_finite_epoch, 1)

    @unittest.skipUnless(SLOW, "set ASMPC_SLOW_TESTS=1 to run long training runs")
    def test_learns_linear_mismatch(self):
        data = linear_mismatch_data(256, seed=31)
        held_out = linear_mismatch_data(64, seed=32)
        ann = pretrain_ann(init_ann(5), data, epochs=300, lr=1e-2, seed=0).model
        result = train_bnn(BnnModel.from_ann(ann), data, epochs=300, lr=1e-3, seed=0, validation=held_out)
        error = result.model.mean_predict(held_out.x, held_out.u) - held_out.g
        self.assertLess(float(np.mean(error ** 2)), 1e-3)


if __name__ == "__main__":
    unittest.main()
