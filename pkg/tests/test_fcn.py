import math

import numpy as np
import pytest

from oracles import linearly_separable, max_rel_error, numeric_grads, random_small_net
from saad import fcn
from saad.dataset import Dataset
from saad.errors import ValidationError


def net_from(weights, biases, **cfg):
    hidden = tuple(W.shape[1] for W in weights[:-1])
    config = fcn.NetworkConfig(hidden_sizes=hidden, dropout_rates=(0.0,) * len(hidden), **cfg)
    return fcn.Network(tuple(map(np.asarray, weights)), tuple(map(np.asarray, biases)), config,
                       np.asarray(weights[0]).shape[0])


class TestInit:
    def test_shapes(self):
        net = fcn.init_network(18, fcn.NetworkConfig(hidden_sizes=(8, 4), dropout_rates=(0.1, 0.1)))
        assert [W.shape for W in net.weights] == [(18, 8), (8, 4), (4, 1)]
        assert all(np.all(b == 0) for b in net.biases)

    def test_bounds(self):
        net = fcn.init_network(18, fcn.NetworkConfig(hidden_sizes=(8,), dropout_rates=(0.0,)))
        assert np.abs(net.weights[0]).max() <= math.sqrt(6 / 26)
        assert np.abs(net.weights[1]).max() <= math.sqrt(6 / 9)

    def test_deterministic(self):
        cfg = fcn.NetworkConfig(seed=5)
        a, b = fcn.init_network(6, cfg), fcn.init_network(6, cfg)
        assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params))

    def test_config_errors(self):
        with pytest.raises(ValidationError):
            fcn.NetworkConfig(hidden_sizes=(8, 4), dropout_rates=(0.1,))
        with pytest.raises(ValidationError):
            fcn.NetworkConfig(dropout_rates=(1.0, 0.0))
        with pytest.raises(ValidationError):
            fcn.NetworkConfig(validation_fraction=1.0)
        with pytest.raises(ValidationError):
            fcn.init_network(0, fcn.NetworkConfig())


class TestForward:
    def test_zero_network_is_half(self):
        net = net_from([np.zeros((3, 2)), np.zeros((2, 1))], [np.zeros(2), np.zeros(1)])
        assert fcn.forward(net, [5.0, -1.0, 2.0])[0] == 0.5
        p = fcn.predict(net, [5.0, -1.0, 2.0])
        assert p.label == 0 and p.confidence == 0.5

    def test_single_linear_layer(self):
        net = net_from([np.array([[1.0]])], [np.zeros(1)])
        assert fcn.forward(net, [0.0])[0] == 0.5
        assert fcn.forward(net, [2.0])[0] == pytest.approx(1 / (1 + math.exp(-2)))

    def test_dimension_mismatch(self):
        net = fcn.init_network(3, fcn.NetworkConfig())
        with pytest.raises(ValidationError):
            fcn.forward(net, [1.0, 2.0])

    def test_rate_zero_train_equals_infer(self):
        cfg = fcn.NetworkConfig(hidden_sizes=(5, 3), dropout_rates=(0.0, 0.0))
        net = fcn.init_network(4, cfg)
        X = np.random.default_rng(0).normal(size=(20, 4))
        a, _ = fcn.forward(net, X, "train", rng=np.random.default_rng(1))
        b, _ = fcn.forward(net, X)
        np.testing.assert_array_equal(a, b)

    def test_output_in_open_interval(self):
        net = fcn.init_network(4, fcn.NetworkConfig(hidden_sizes=(6,), dropout_rates=(0.5,)))
        X = np.random.default_rng(0).normal(0, 1e3, size=(500, 4))
        v, _ = fcn.forward(net, X)
        assert np.all(np.isfinite(v)) and np.all(v >= 0) and np.all(v <= 1)
        assert 0 < fcn.forward(net, [0.1, 0.2, 0.3, 0.4])[0] < 1

    def test_inverted_dropout_expectation(self):
        cfg = fcn.NetworkConfig(hidden_sizes=(6,), dropout_rates=(0.5,))
        net = fcn.init_network(3, cfg)
        x = np.array([[0.8, -0.3, 1.2]])
        _, inf = fcn.forward(net, x)
        X = np.repeat(x, 10_000, axis=0)
        _, tr = fcn.forward(net, X, "train", rng=np.random.default_rng(0))
        expected = np.maximum(inf.pre_activations[0][0], 0)
        mean = tr.inputs[1].mean(axis=0)
        active = expected > 0
        assert active.any()
        np.testing.assert_allclose(mean[active], expected[active], rtol=0.02)

    def test_train_mode_needs_rng(self):
        net = fcn.init_network(3, fcn.NetworkConfig())
        with pytest.raises(ValidationError):
            fcn.forward(net, [1.0, 2.0, 3.0], "train")


class TestLoss:
    def test_ln2(self):
        net = net_from([np.array([[0.0]])], [np.zeros(1)], l2_lambda=0.0)
        assert fcn.bce_l2_loss(0.5, 1, net) == pytest.approx(math.log(2), abs=1e-12)

    def test_perfect_prediction(self):
        net = net_from([np.array([[0.0]])], [np.zeros(1)], l2_lambda=0.0)
        assert fcn.bce_l2_loss(1.0, 1, net) < 1e-6
        assert math.isfinite(fcn.bce_l2_loss(0.0, 1, net))

    def test_l2_term_weights_only(self):
        net = net_from([np.array([[2.0]])], [np.array([7.0])], l2_lambda=0.1)
        assert fcn.bce_l2_loss(1.0, 1, net) == pytest.approx(0.4, abs=1e-6)


class TestBackward:
    def test_output_delta_is_v_minus_y(self):
        net = net_from([np.array([[0.7], [-0.2]])], [np.array([0.1])], l2_lambda=0.0)
        x = np.array([[1.0, 0.0]])
        v, cache = fcn.forward(net, x)
        grads = fcn.backward(net, cache, [1])
        assert grads[1][0] == pytest.approx(v[0] - 1, abs=1e-15)
        assert grads[0][0, 0] == pytest.approx(v[0] - 1, abs=1e-15)
        assert grads[0][1, 0] == 0

    def test_4_2_1_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        cfg = fcn.NetworkConfig(hidden_sizes=(2,), dropout_rates=(0.0,), l2_lambda=0.01, seed=3)
        net = fcn.init_network(4, cfg)
        X, y = rng.normal(size=(6, 4)), rng.integers(0, 2, 6)
        _, cache = fcn.forward(net, X)
        assert max_rel_error(fcn.backward(net, cache, y), numeric_grads(net, X, y)) < 1e-4

    def test_random_nets(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            net = random_small_net(rng)
            X = rng.normal(size=(int(rng.integers(1, 5)), net.input_dim))
            y = rng.integers(0, 2, X.shape[0])
            _, cache = fcn.forward(net, X)
            assert max_rel_error(fcn.backward(net, cache, y), numeric_grads(net, X, y)) < 1e-4

    def test_dropped_unit_has_zero_incoming_gradient(self):
        cfg = fcn.NetworkConfig(hidden_sizes=(3,), dropout_rates=(0.5,), l2_lambda=0.0)
        net = fcn.init_network(2, cfg)
        mask = np.array([[2.0, 0.0, 2.0]])
        _, cache = fcn.forward(net, [[1.0, -1.0]], "train", masks=[mask])
        grads = fcn.backward(net, cache, [1])
        assert np.all(grads[0][:, 1] == 0) and grads[1][1] == 0

    def test_mismatched_cache(self):
        a = fcn.init_network(2, fcn.NetworkConfig())
        b = fcn.init_network(2, fcn.NetworkConfig(seed=1))
        _, cache = fcn.forward(a, [1.0, 2.0])
        with pytest.raises(ValidationError):
            fcn.backward(b, cache, [1])


class TestAdam:
    def scalar_net(self, w=0.0, **cfg):
        return net_from([np.array([[w]])], [np.zeros(1)], **cfg)

    def test_first_step(self):
        net = self.scalar_net(learning_rate=0.01)
        new, state = fcn.adam_update(net, fcn.AdamState.zeros_like(net), [np.ones((1, 1)), np.zeros(1)])
        assert new.weights[0][0, 0] == pytest.approx(-0.01, rel=1e-6)
        assert state.timestep == 1

    def test_zero_gradient_fixed_point(self):
        net = fcn.init_network(3, fcn.NetworkConfig(hidden_sizes=(2,), dropout_rates=(0.0,)))
        new, _ = fcn.adam_update(net, fcn.AdamState.zeros_like(net), [np.zeros_like(p) for p in net.params])
        assert all(np.array_equal(a, b) for a, b in zip(net.params, new.params))

    def test_deterministic_and_shape_checked(self):
        net = self.scalar_net(0.3)
        s = fcn.AdamState.zeros_like(net)
        g = [np.full((1, 1), 0.2), np.full(1, -0.1)]
        a, sa = fcn.adam_update(net, s, g)
        b, sb = fcn.adam_update(net, s, g)
        assert all(np.array_equal(x, y) for x, y in zip(a.params, b.params)) and sa.timestep == sb.timestep
        with pytest.raises(ValidationError):
            fcn.adam_update(net, s, [np.zeros((2, 1)), np.zeros(1)])


def test_early_stopping_rule():
    stop = fcn.EarlyStopping(patience=1)
    assert stop.update(1, 0.5) is False
    assert stop.update(2, 0.6) is True
    assert stop.best_epoch == 1


def separable_dataset(seed=0):
    X, y = linearly_separable(seed)
    return Dataset(("x0", "x1"), X, y)


def test_train_learns_and_is_deterministic():
    ds = separable_dataset()
    cfg = fcn.NetworkConfig(hidden_sizes=(8,), dropout_rates=(0.0,), learning_rate=0.01, max_epochs=200, seed=1)
    net, hist = fcn.train(ds, cfg)
    labels, _ = fcn.predict_batch(net, ds.features)
    assert np.mean(labels == ds.labels) >= 0.95
    _, again = fcn.train(ds, cfg)
    assert hist.to_dict() == again.to_dict()
    assert hist.val_loss[hist.best_epoch - 1] == min(hist.val_loss)


def test_train_errors():
    X, y = linearly_separable(0, 50)
    with pytest.raises(ValidationError):
        fcn.train(Dataset(("a", "b"), X, None), fcn.NetworkConfig())
    with pytest.raises(ValidationError):
        fcn.train(Dataset(("a", "b"), X[:10], y[:10]), fcn.NetworkConfig(batch_size=32))


def test_train_returns_best_epoch_params():
    ds = separable_dataset(2)
    cfg = fcn.NetworkConfig(hidden_sizes=(4,), dropout_rates=(0.0,), learning_rate=0.05, max_epochs=40, patience=3)
    net, hist = fcn.train(ds, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    perm = rng.permutation(ds.n_rows)
    val = np.sort(perm[:math.floor(0.2 * ds.n_rows)])
    loss = fcn.bce_l2_loss(fcn.predict_proba(net, ds.features[val]), ds.labels[val], net)
    assert loss == pytest.approx(hist.val_loss[hist.best_epoch - 1], abs=1e-12)


def test_predict_label_boundary():
    net = net_from([np.array([[1.0]])], [np.zeros(1)])
    assert fcn.predict(net, [0.0]).label == 0
    assert fcn.predict(net, [math.log(0.7 / 0.3)]).label == 1
