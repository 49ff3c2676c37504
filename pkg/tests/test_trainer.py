import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from reglearn import trainer
from reglearn.data import Dataset
from reglearn.errors import ConfigurationError, DataError, NumericError, SequencingError
from reglearn.network import Batch, GradientSet, LayerSpec, Network, backward, forward, mlp_specs, mse_loss
from reglearn.regularizer import RegCoefficients
from reglearn.trainer import (
    TrainConfig, TrainerState, counterfactual_gradient, lambda_step, train, train_linear, weight_step,
)

from conftest import counterfactual_fd_errors, prox_grid_argmin, prox_once, random_net


def single_weight_state(w, lam, theta=None):
    net = Network([LayerSpec(1, 1, "identity")], [np.array([[float(w)]])], [np.zeros(1)])
    theta = lam if theta is None else theta
    return TrainerState(net, RegCoefficients([np.array([[float(lam)]])], "l1", theta))


def grads_of(values):
    return GradientSet([np.array(values, dtype=np.float64).reshape(1, -1)], [np.zeros(1)])


def linear_dataset(m=50, d=5, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((m, d))
    coef = rng.uniform(-2, 2, size=d)
    y = x @ coef + 0.7 + noise * rng.standard_normal(m)
    return Dataset(x, y, [f"f{j}" for j in range(d)]), coef


class TestTrainConfig:
    def test_weight_update_defaults(self):
        assert TrainConfig(norm="l1").weight_update == "proximal"
        assert TrainConfig(norm="l2").weight_update == "subgradient"

    def test_proximal_requires_l1(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(norm="l2", weight_update="proximal")

    @pytest.mark.parametrize("kwargs", [
        {"eta": 0.0}, {"eta": -1.0}, {"eta": math.inf}, {"nu": -1.0}, {"theta": math.nan},
        {"mode": "gbt"}, {"norm": "l3"}, {"batch_size": 0}, {"sparsity_epsilon": -1.0},
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            TrainConfig(**kwargs)

    def test_nu_zero_allowed(self):
        assert TrainConfig(nu=0.0).nu == 0.0


class TestWeightStep:
    def test_no_gradient_no_penalty(self, rng):
        net = random_net([3, 4, 1], 0)
        x = rng.standard_normal((5, 3))
        before = [w.copy() for w in net.weights]
        state = TrainerState(net, RegCoefficients.constant(net, -1000.0, "l1"))
        weight_step(state, Batch(x, forward(net, x)), TrainConfig(eta=0.1, weight_update="subgradient"))
        for a, b in zip(before, state.net.weights):
            np.testing.assert_array_equal(a, b)

    def test_proximal_shrink(self):
        w, r = prox_once(0.5, 0.1, 0.0)
        assert w == pytest.approx(0.4, abs=1e-15)
        assert r == pytest.approx(1.0, abs=1e-12)

    def test_proximal_clamp(self):
        w, r = prox_once(0.05, 0.1, 0.0)
        assert w == 0.0
        assert r == pytest.approx(0.5, abs=1e-12)

    def test_zero_stays_zero(self):
        for lam in (-10.0, 0.0, 5.0):
            w, r = prox_once(0.0, 0.1, lam)
            assert w == 0.0 and r == 0.0

    def test_proximal_overflowing_threshold_clamps(self):
        w, _ = prox_once(3.0, 0.1, 1000.0)
        assert w == 0.0

    @given(w_prime=st.floats(-2.0, 2.0), eta=st.floats(1e-3, 1.0), lam=st.floats(-6.0, 2.0))
    def test_proximal_is_composite_argmin(self, w_prime, eta, lam):
        w, _ = prox_once(w_prime, eta, lam)
        assert abs(w - prox_grid_argmin(w_prime, eta, lam)) <= 1e-4

    def test_effective_r_satisfies_update_equation(self, rng):
        net = random_net([3, 5, 1], 1)
        x, y = rng.standard_normal((8, 3)), rng.standard_normal(8)
        state = TrainerState(net.copy(), RegCoefficients([rng.uniform(-3, 1, w.shape) for w in net.weights], "l1", -1))
        _, g = backward(net, Batch(x, y))
        weight_step(state, Batch(x, y), TrainConfig(eta=0.05))
        for w0, w1, gk, r in zip(net.weights, state.net.weights, g.weights, state.pending_r):
            np.testing.assert_allclose(w1, w0 - 0.05 * (gk + r), rtol=0, atol=1e-14)

    def test_subgradient_exact(self, rng):
        net = random_net([2, 3, 1], 2)
        x, y = rng.standard_normal((4, 2)), rng.standard_normal(4)
        coeffs = RegCoefficients([rng.uniform(-2, 0, w.shape) for w in net.weights], "l2", -1.0)
        state = TrainerState(net.copy(), coeffs)
        _, g = backward(net, Batch(x, y))
        weight_step(state, Batch(x, y), TrainConfig(eta=0.1, norm="l2"))
        for k in range(len(net.weights)):
            r = np.exp(coeffs.lambdas[k]) * 2 * net.weights[k]
            assert state.net.weights[k].tobytes() == (net.weights[k] - 0.1 * (g.weights[k] + r)).tobytes()
            np.testing.assert_array_equal(state.net.biases[k], net.biases[k] - 0.1 * g.biases[k])

    def test_biases_ignore_penalty(self, rng):
        net = random_net([2, 3, 1], 3, bias_scale=5.0)
        x = rng.standard_normal((4, 2))
        state = TrainerState(net.copy(), RegCoefficients.constant(net, 3.0, "l1"))
        weight_step(state, Batch(x, forward(net, x)), TrainConfig(eta=0.1))
        for b0, b1 in zip(net.biases, state.net.biases):
            np.testing.assert_array_equal(b0, b1)

    def test_non_finite_update_reports_step(self):
        state = single_weight_state(1.0, -1.0)
        state.step_index = 41
        g = GradientSet([np.array([[1e308]])], [np.zeros(1)])
        with pytest.raises(NumericError) as info:
            weight_step(state, Batch(np.zeros((1, 1)), np.zeros(1)), TrainConfig(eta=1e10), g)
        assert info.value.step == 41


class TestCounterfactualGradient:
    def test_zero_next_gradient(self):
        assert counterfactual_gradient(0.0, 123.0, 0.1) == 0.0

    def test_zero_penalty_gradient(self):
        assert counterfactual_gradient(4.0, 0.0, 0.1) == 0.0

    def test_arithmetic(self):
        assert counterfactual_gradient(0.5, 0.2, 0.1) == pytest.approx(-0.01, rel=1e-15)

    @pytest.mark.parametrize("norm", ["l1", "l2"])
    @pytest.mark.parametrize("seed", range(3))
    def test_matches_finite_differences(self, norm, seed):
        assert max(counterfactual_fd_errors(seed, norm)) < 1e-4


class TestLambdaStep:
    def test_requires_pending_r(self):
        with pytest.raises(SequencingError):
            lambda_step(single_weight_state(1.0, -6.6), grads_of([0.5]), TrainConfig())

    def test_nu_zero_unchanged(self):
        state = single_weight_state(1.0, -6.6)
        state.pending_r = [np.array([[0.2]])]
        lambda_step(state, grads_of([0.5]), TrainConfig(nu=0.0))
        assert state.coeffs.lambdas[0][0, 0] == -6.6
        assert state.pending_r is None

    def test_single_weight_projects_back(self):
        state = single_weight_state(1.0, -6.6)
        state.pending_r = [np.array([[0.2]])]
        cfg = TrainConfig(nu=1.0, eta=0.1)
        moved = -6.6 + cfg.nu * cfg.eta * 0.5 * 0.2
        assert moved == pytest.approx(-6.59, abs=1e-14)
        lambda_step(state, grads_of([0.5]), cfg)
        assert state.coeffs.lambdas[0][0, 0] == pytest.approx(-6.6, abs=1e-14)

    def test_two_weights_zero_sum(self):
        net = Network([LayerSpec(2, 1, "identity")], [np.array([[1.0, 1.0]])], [np.zeros(1)])
        state = TrainerState(net, RegCoefficients([np.array([[-6.6, -6.6]])], "l1", -6.6))
        state.pending_r = [np.array([[0.4, 0.3]])]
        # update on the first edge: 1 * 0.1 * 0.5 * 0.4 = 0.02; none on the second
        lambda_step(state, grads_of([0.5, 0.0]), TrainConfig(nu=1.0, eta=0.1))
        np.testing.assert_allclose(state.coeffs.lambdas[0], [[-6.59, -6.61]], atol=1e-13)

    @given(seed=st.integers(0, 10_000), nu=st.floats(0.0, 1e5), theta=st.floats(-10, 0))
    def test_mean_theta_invariant(self, seed, nu, theta):
        rng = np.random.default_rng(seed)
        net = random_net([3, 4, 1], seed % 97)
        state = TrainerState(net, RegCoefficients.constant(net, theta, "l1"))
        for _ in range(5):
            state.pending_r = [rng.standard_normal(w.shape) for w in net.weights]
            g = GradientSet([rng.standard_normal(w.shape) for w in net.weights], [b * 0 for b in net.biases])
            lambda_step(state, g, TrainConfig(nu=nu, eta=0.01, theta=theta))
            assert abs(state.coeffs.mean() - theta) < 1e-10


class TestTrain:
    def test_rln_nu_zero_matches_uniform(self):
        ds, _ = linear_dataset(80, 6, seed=1, noise=0.3)
        arch = mlp_specs(6, (5,))
        base = TrainConfig(eta=0.02, nu=0.0, theta=-3.0, epochs=8, batch_size=16, seed=4)
        a, ca, _ = train(ds, arch, replace(base, mode="rln"))
        b, cb, _ = train(ds, arch, replace(base, mode="dnn_uniform"))
        for x, y in zip(a.weights + a.biases, b.weights + b.biases):
            assert x.tobytes() == y.tobytes()
        assert ca.flat().tobytes() == cb.flat().tobytes()

    def test_zero_epochs(self):
        ds, _ = linear_dataset()
        net, coeffs, record = train(ds, mlp_specs(5, (3,)), TrainConfig(epochs=0, theta=-2.0))
        assert record.n_epochs == 0
        np.testing.assert_array_equal(coeffs.flat(), -2.0)
        np.testing.assert_array_equal(net.biases[0], 0.0)

    def test_smoke_linear_least_squares(self):
        ds, _ = linear_dataset(50, 5)
        cfg = TrainConfig(eta=0.01, nu=0.0, theta=-20.0, epochs=30, batch_size=10, norm="l2", mode="dnn_uniform")
        arch = [LayerSpec(5, 1, "identity")]
        init, _, _ = train(ds, arch, replace(cfg, epochs=0))
        net, _, record = train(ds, arch, cfg)
        initial = mse_loss(forward(init, ds.features), ds.targets)
        final = mse_loss(forward(net, ds.features), ds.targets)
        # the least-squares optimum of this noiseless problem is exactly zero
        coef, *_ = np.linalg.lstsq(np.c_[ds.features, np.ones(50)], ds.targets, rcond=None)
        assert mse_loss(np.c_[ds.features, np.ones(50)] @ coef, ds.targets) < 1e-20
        assert final < 0.1 * initial
        assert record.train_loss[-1] == pytest.approx(final, rel=1e-12)

    def test_deterministic(self):
        ds, _ = linear_dataset(60, 4, noise=0.5)
        cfg = TrainConfig(eta=0.01, nu=1e3, theta=-4.0, epochs=5, batch_size=8, seed=11)
        runs = [train(ds, mlp_specs(4, (6, 3)), cfg, track_edges=5) for _ in range(2)]
        (n1, c1, r1), (n2, c2, r2) = runs
        for x, y in zip(n1.weights + n1.biases + c1.lambdas, n2.weights + n2.biases + c2.lambdas):
            assert x.tobytes() == y.tobytes()
        assert r1.train_loss == r2.train_loss

    def test_record_shape(self):
        ds, _ = linear_dataset(60, 4, noise=0.5)
        ds = ds.with_split(["train"] * 50 + ["validation"] * 10)
        _, coeffs, rec = train(ds, mlp_specs(4, (6,)), TrainConfig(epochs=7, batch_size=16, nu=100.0), track_edges="all")
        assert rec.n_epochs == 7 and len(rec.val_loss) == 7 and len(rec.zero_fraction) == 7
        assert all(len(z) == 2 for z in rec.zero_fraction)
        assert rec.edge_ids.size == 24
        np.testing.assert_array_equal(rec.edge_lambda[-1], coeffs.lambdas[0].ravel())

    def test_pairing_and_single_backward_per_batch(self, monkeypatch):
        calls = {"backward": 0, "lambda": 0}
        real_backward, real_lambda = trainer.backward, trainer.lambda_step

        def counting_backward(*a, **k):
            calls["backward"] += 1
            return real_backward(*a, **k)

        def counting_lambda(*a, **k):
            calls["lambda"] += 1
            return real_lambda(*a, **k)

        monkeypatch.setattr(trainer, "backward", counting_backward)
        monkeypatch.setattr(trainer, "lambda_step", counting_lambda)
        ds, _ = linear_dataset(45, 3)
        train(ds, mlp_specs(3, (4,)), TrainConfig(epochs=3, batch_size=10, nu=10.0))
        steps = 3 * math.ceil(45 / 10)
        assert calls["backward"] == steps
        # every weight step but the last is followed by a coefficient step, across epoch boundaries too
        assert calls["lambda"] == steps - 1

    def test_uniform_mode_keeps_lambda(self):
        ds, _ = linear_dataset(40, 3, noise=1.0)
        _, coeffs, _ = train(ds, mlp_specs(3, (4,)), TrainConfig(mode="dnn_uniform", nu=1e5, theta=-3.0, epochs=3))
        np.testing.assert_array_equal(coeffs.flat(), -3.0)

    def test_rln_mean_stays_at_theta(self):
        ds, _ = linear_dataset(40, 3, noise=1.0)
        _, coeffs, _ = train(ds, mlp_specs(3, (4,)), TrainConfig(nu=1e4, theta=-3.0, epochs=3, eta=0.05))
        assert abs(coeffs.mean() + 3.0) < 1e-10

    def test_divergence_carries_context(self):
        ds, _ = linear_dataset(40, 3)
        with pytest.raises(NumericError) as info:
            train(ds, mlp_specs(3, (4,)), TrainConfig(eta=1e6, epochs=5, nu=0.0))
        assert info.value.epoch is not None

    def test_needs_training_rows(self):
        ds, _ = linear_dataset(10, 2)
        with pytest.raises(DataError):
            train(ds.with_split(["test"] * 10), mlp_specs(2, (2,)), TrainConfig())

    def test_width_mismatch(self):
        ds, _ = linear_dataset(10, 2)
        with pytest.raises(ConfigurationError):
            train(ds, mlp_specs(3, (2,)), TrainConfig())


class TestTrainLinear:
    def test_recovers_coefficients(self):
        ds, coef = linear_dataset(200, 4)
        model = train_linear(ds, TrainConfig(eta=0.1, theta=-50.0, epochs=3000, batch_size=200))
        oracle, *_ = np.linalg.lstsq(np.c_[ds.features, np.ones(200)], ds.targets, rcond=None)
        np.testing.assert_allclose(model.coef, oracle[:4], atol=1e-3)
        np.testing.assert_allclose(model.coef, coef, atol=1e-3)
        assert model.intercept == pytest.approx(0.7, abs=1e-3)

    def test_zero_targets(self):
        ds, _ = linear_dataset(100, 3)
        ds = Dataset(ds.features, np.zeros(100), ds.feature_names)
        model = train_linear(ds, TrainConfig(eta=0.05, theta=-6.0, epochs=300, batch_size=25))
        assert np.abs(model.coef).max() < 1e-3

    def test_ridge_path(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((40, 2))
        x[:, 1] += 0.5 * x[:, 0]
        y = x @ np.array([1.5, -1.0]) + 0.3 * rng.standard_normal(40)
        ds = Dataset(x, y, ["a", "b"])
        xc, yc = x - x.mean(0), y - y.mean()
        norms = []
        for lam in (-4.0, -2.0, -1.0, 0.0, 1.0):
            model = train_linear(ds, TrainConfig(eta=0.1, theta=lam, epochs=4000, batch_size=40))
            # minimizer of mean squared error + exp(lam) * ||w||^2
            oracle = np.linalg.solve(xc.T @ xc / 40 + math.exp(lam) * np.eye(2), xc.T @ yc / 40)
            np.testing.assert_allclose(model.coef, oracle, atol=1e-8)
            norms.append(float(np.linalg.norm(model.coef)))
        assert all(a > b for a, b in zip(norms, norms[1:]))
