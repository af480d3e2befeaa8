"""A small fully connected ReLU network with hand-written backprop and Adam.

The Q-network maps a 2-d state to 3 action values through two hidden layers
of 64 units. :class:`MLP` is the general container; other callers (e.g. the
toy classifier environment) reuse it with different layer sizes.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from roar import kernels

Q_ARCH = (2, 64, 64, 3)


class QNetError(ValueError):
    pass


class NonFiniteError(QNetError):
    """Non-finite input, gradient or parameter."""


class MLP:
    """Weights (fan_in, fan_out) and biases of a ReLU MLP with linear output."""

    def __init__(self, weights, biases):
        if len(weights) != len(biases):
            raise QNetError("weights and biases differ in length")
        self.weights = [np.array(W, dtype=np.float64) for W in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise QNetError(f"bad layer shapes {W.shape}, {b.shape}")
        for W_in, W_out in zip(self.weights, self.weights[1:]):
            if W_in.shape[1] != W_out.shape[0]:
                raise QNetError("consecutive layer shapes do not chain")

    @property
    def arch(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(W.shape[1] for W in self.weights)

    @property
    def params(self) -> list:
        """Parameters in the order W1, b1, W2, b2, ..."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def forward(self, states) -> np.ndarray:
        """Action values for one state (shape (n_in,)) or a batch (n, n_in)."""
        x = np.asarray(states, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.shape[1] != self.arch[0]:
            raise QNetError(f"expected {self.arch[0]} inputs, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise NonFiniteError("state contains NaN or Inf")
        out = kernels.mlp_forward(X, self.weights, self.biases)[-1]
        return out[0] if single else out

    __call__ = forward

    def clone(self) -> "MLP":
        return type(self)([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def to_dict(self) -> dict:
        d = {"arch": list(self.arch)}
        for i, (W, b) in enumerate(zip(self.weights, self.biases), start=1):
            d[f"W{i}"] = W.tolist()
            d[f"b{i}"] = b.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MLP":
        n = len(d["arch"]) - 1
        net = cls([d[f"W{i}"] for i in range(1, n + 1)], [d[f"b{i}"] for i in range(1, n + 1)])
        if list(net.arch) != list(d["arch"]):
            raise QNetError(f"arch field {d['arch']} disagrees with weights {net.arch}")
        return net

    def __eq__(self, other):
        if not isinstance(other, MLP) or self.arch != other.arch:
            return NotImplemented
        return all(np.array_equal(p, q) for p, q in zip(self.params, other.params))


class QNetwork(MLP):
    def __init__(self, weights, biases):
        super().__init__(weights, biases)
        if self.arch != Q_ARCH:
            raise QNetError(f"Q-network architecture must be {Q_ARCH}, got {self.arch}")


def he_uniform(sizes, seed) -> tuple[list, list]:
    """Weights from U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def init_network(seed=None, sizes=Q_ARCH) -> MLP:
    weights, biases = he_uniform(sizes, seed)
    cls = QNetwork if tuple(sizes) == Q_ARCH else MLP
    return cls(weights, biases)


@dataclass
class Gradients:
    """Partials of a scalar loss, shaped like the network's parameters."""

    weights: list
    biases: list

    @property
    def params(self) -> list:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in self.params)


def backprop(net: MLP, X: np.ndarray, dloss_dout_fn):
    """Run forward, let ``dloss_dout_fn(outputs) -> (loss, dout)`` score it, backprop."""
    acts = kernels.mlp_forward(X, net.weights, net.biases)
    loss, dout = dloss_dout_fn(acts[-1])
    dWs, dbs = kernels.mlp_backward(acts, net.weights, dout)
    return loss, Gradients(dWs, dbs)


def loss_and_grad(net: MLP, states, actions, targets, huber: bool = False):
    """Mean squared TD error on the chosen actions, and its gradient.

    Only the output unit of each sample's chosen action receives gradient.
    With ``huber=True`` the per-sample loss is the Huber loss (delta 1).
    """
    X = np.atleast_2d(np.asarray(states, dtype=np.float64))
    a = np.asarray(actions, dtype=np.int64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    n = len(X)
    if n == 0:
        raise QNetError("empty batch")
    if len(a) != n or len(y) != n:
        raise QNetError(f"batch length mismatch: {n} states, {len(a)} actions, {len(y)} targets")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NonFiniteError("non-finite states or targets")
    rows = np.arange(n)

    def score(q):
        err = q[rows, a] - y
        dout = np.zeros_like(q)
        if huber:
            small = np.abs(err) <= 1.0
            loss = np.mean(np.where(small, 0.5 * err * err, np.abs(err) - 0.5))
            dout[rows, a] = np.where(small, err, np.sign(err)) / n
        else:
            loss = np.mean(err * err)
            dout[rows, a] = 2.0 * err / n
        return float(loss), dout

    return backprop(net, X, score)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "t": self.t,
            "m": [x.tolist() for x in self.m],
            "v": [x.tolist() for x in self.v],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdamState":
        d = dict(d)
        d["m"] = [np.array(x, dtype=np.float64) for x in d.get("m", [])]
        d["v"] = [np.array(x, dtype=np.float64) for x in d.get("v", [])]
        return cls(**d)

    def clone(self) -> "AdamState":
        return copy.deepcopy(self)


def adam_step(net: MLP, grads: Gradients, opt: AdamState, lr: float | None = None):
    """One bias-corrected Adam update, applied to ``net`` in place.

    Returns ``(net, opt)``. A non-finite gradient is rejected before anything
    is modified.
    """
    params = net.params
    gparams = grads.params
    if len(params) != len(gparams) or any(p.shape != g.shape for p, g in zip(params, gparams)):
        raise QNetError("gradient shapes do not match the network")
    if not grads.is_finite():
        raise NonFiniteError("non-finite gradient; update rejected")
    lr = opt.lr if lr is None else lr
    if not opt.m:
        opt.m = [np.zeros_like(p) for p in params]
        opt.v = [np.zeros_like(p) for p in params]
    opt.t += 1
    c1 = 1.0 - opt.beta1**opt.t
    c2 = 1.0 - opt.beta2**opt.t
    for p, g, m, v in zip(params, gparams, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    if not net.is_finite():
        raise NonFiniteError("parameters became non-finite")
    return net, opt


def save_checkpoint(net: MLP, opt: AdamState | None = None) -> dict:
    d = net.to_dict()
    d["opt_state"] = opt.to_dict() if opt is not None else None
    return d


def load_checkpoint(d: dict):
    net = (QNetwork if tuple(d["arch"]) == Q_ARCH else MLP).from_dict(d)
    opt = AdamState.from_dict(d["opt_state"]) if d.get("opt_state") else None
    return net, opt
