import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roar.qnet import (
    MLP,
    Q_ARCH,
    AdamState,
    NonFiniteError,
    QNetError,
    QNetwork,
    adam_step,
    backprop,
    init_network,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)


def straight_line_forward(net, x):
    """Per-sample loops, no matrix products: an independent forward oracle."""
    h = list(x)
    for k, (W, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for j in range(W.shape[1]):
            z = b[j] + sum(h[i] * W[i, j] for i in range(W.shape[0]))
            out.append(z if k == len(net.weights) - 1 else max(z, 0.0))
        h = out
    return np.array(h)


def finite_difference(net, loss_fn, h=1e-5):
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_fn()
            p[idx] = old - h
            down = loss_fn()
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1e-8, np.maximum(np.abs(a), np.abs(b)))


def check_gradients(seed, arch=(2, 8, 8, 3), n=6):
    rng = np.random.default_rng(seed)
    net = init_network(seed, arch)
    X = rng.uniform(-2, 2, (n, arch[0]))
    a = rng.integers(arch[-1], size=n)
    y = rng.standard_normal(n)
    _, grads = loss_and_grad(net, X, a, y)

    def loss():
        q = net.forward(X)
        return float(np.mean((q[np.arange(n), a] - y) ** 2))

    fd = finite_difference(net, loss)
    return max(float(np.max(rel_err(g, f))) for g, f in zip(grads.params, fd))


def test_forward_matches_straight_line_oracle():
    net = init_network(3)
    rng = np.random.default_rng(3)
    for x in rng.uniform(-3, 3, (20, 2)):
        np.testing.assert_allclose(net.forward(x), straight_line_forward(net, x), rtol=1e-12, atol=1e-12)


def test_zero_weights_give_bias():
    net = QNetwork([np.zeros((2, 64)), np.zeros((64, 64)), np.zeros((64, 3))], [np.zeros(64), np.zeros(64), np.array([1.0, 2.0, 3.0])])
    assert net.forward([0.5, -0.5]).tolist() == [1.0, 2.0, 3.0]


def test_batch_and_single_agree():
    net = init_network(0)
    X = np.random.default_rng(0).standard_normal((5, 2))
    batch = net.forward(X)
    for i in range(5):
        # BLAS may order the sums differently for one row
        np.testing.assert_allclose(batch[i], net.forward(X[i]), rtol=1e-13, atol=1e-15)


def test_forward_rejects_bad_input():
    net = init_network(0)
    with pytest.raises(QNetError):
        net.forward([1.0, 2.0, 3.0])
    with pytest.raises(NonFiniteError):
        net.forward([np.nan, 0.0])


def test_arch_enforced():
    with pytest.raises(QNetError):
        QNetwork([np.zeros((2, 3))], [np.zeros(3)])
    assert init_network(0).arch == Q_ARCH


def test_he_uniform_bounds_and_seeded():
    net = init_network(42)
    for W in net.weights:
        assert np.all(np.abs(W) <= np.sqrt(6 / W.shape[0]))
    assert all(np.all(b == 0) for b in net.biases)
    assert init_network(42) == net
    assert not (init_network(43) == net)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_finite_difference(seed):
    assert check_gradients(seed) < 1e-4


def test_gradient_full_size_network():
    assert check_gradients(11, Q_ARCH, n=4) < 1e-4


def test_gradient_only_chosen_action():
    net = init_network(1)
    X = np.ones((1, 2))
    _, g = loss_and_grad(net, X, [1], [0.0])
    assert np.all(g.weights[-1][:, [0, 2]] == 0) and np.all(g.biases[-1][[0, 2]] == 0)


def test_batch_length_mismatch():
    with pytest.raises(QNetError):
        loss_and_grad(init_network(0), np.zeros((3, 2)), [0, 1], [0.0, 0.0, 0.0])


def test_huber_gradient():
    net = init_network(2)
    X = np.random.default_rng(2).standard_normal((4, 2))
    a, y = [0, 1, 2, 0], np.array([10.0, -10.0, 0.0, 0.1])
    _, g = loss_and_grad(net, X, a, y, huber=True)

    def loss():
        err = net.forward(X)[np.arange(4), a] - y
        return float(np.mean(np.where(np.abs(err) <= 1, 0.5 * err**2, np.abs(err) - 0.5)))

    fd = finite_difference(net, loss)
    assert max(float(np.max(rel_err(p, f))) for p, f in zip(g.params, fd)) < 1e-4


def test_adam_first_step_is_lr_times_sign():
    net = init_network(5)
    before = [p.copy() for p in net.params]
    _, g = loss_and_grad(net, np.array([[0.3, -0.7]]), [2], [5.0])
    adam_step(net, g, AdamState(lr=0.001))
    for p0, p1, gp in zip(before, net.params, g.params):
        moved = np.abs(gp) > 1e-3  # eps is negligible
        # bias-corrected first step: lr * g / (|g| + eps)
        np.testing.assert_allclose((p0 - p1)[moved], 0.001 * np.sign(gp[moved]), rtol=1e-4)
        assert np.all(p0[gp == 0] == p1[gp == 0])


def test_adam_converges_on_scalar_quadratic():
    net = MLP([np.zeros((1, 1))], [np.zeros(1)])
    opt = AdamState(lr=0.05)
    X = np.zeros((1, 1))
    for _ in range(200):
        _, g = backprop(net, X, lambda out: (float((out[0, 0] - 3.0) ** 2), 2 * (out - 3.0)))
        adam_step(net, g, opt)
    assert net.biases[0][0] == pytest.approx(3.0, abs=0.05)


def test_adam_rejects_nonfinite_without_mutation():
    net = init_network(6)
    before = net.clone()
    _, g = loss_and_grad(net, np.ones((1, 2)), [0], [1.0])
    g.weights[0][0, 0] = np.inf
    opt = AdamState()
    with pytest.raises(NonFiniteError):
        adam_step(net, g, opt)
    assert net == before and opt.t == 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_checkpoint_round_trip(seed):
    net = init_network(seed)
    opt = AdamState()
    _, g = loss_and_grad(net, np.ones((2, 2)), [0, 1], [1.0, 2.0])
    adam_step(net, g, opt)
    d = json.loads(json.dumps(save_checkpoint(net, opt)))
    net2, opt2 = load_checkpoint(d)
    assert isinstance(net2, QNetwork) and net2 == net
    assert opt2.t == opt.t and all(np.array_equal(a, b) for a, b in zip(opt2.m, opt.m))


def test_from_dict_arch_mismatch():
    d = init_network(0).to_dict()
    d["arch"] = [2, 64, 64, 4]
    with pytest.raises(QNetError):
        MLP.from_dict(d)
