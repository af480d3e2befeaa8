"""A real training environment: a small MLP classifier on Gaussian clusters.

Validation inputs carry additive noise the training inputs lack, so a model
trained only on clean data generalises poorly; augmented copies (inputs plus
random Gaussian noise) can bridge the gap. Validation error in percent plays
the role of WER.

Half of the input dimensions are "fragile": the classes separate perfectly
along them on clean data, but the separation is small compared with the
validation noise. The other half separate the classes less cleanly and
survive the noise. Clean-only training leans on the fragile dimensions.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from roar.env import EnvState
from roar.qnet import MLP, backprop, init_network


@dataclass
class SyntheticTask:
    n_train: int = 2000
    n_val: int = 500
    dim: int = 16
    n_classes: int = 4
    shift: float = 0.5  # std of the additive validation noise
    fragile_fraction: float = 0.5
    fragile_spread: float = 0.3
    fragile_std: float = 0.05
    robust_spread: float = 1.0
    robust_std: float = 1.0
    hidden: int = 32
    lr: float = 0.01
    batch_size: int = 32
    aug_noise: tuple = (0.2, 0.8)
    beta_max: float = 4.0

    def __post_init__(self):
        self.aug_noise = tuple(float(v) for v in self.aug_noise)
        if self.n_classes < 2 or self.dim < 1 or self.n_train < self.n_classes or self.n_val < 1:
            raise ValueError("invalid task sizes")
        if self.shift < 0:
            raise ValueError("shift must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTask":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown learner task keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["aug_noise"] = list(self.aug_noise)
        return d


def _balanced_labels(n, n_classes, rng):
    labels = np.arange(n) % n_classes
    rng.shuffle(labels)
    return labels


def make_data(task: SyntheticTask, seed):
    """Return ``(x_train, y_train, x_val, y_val)`` for ``seed``."""
    rng = np.random.default_rng(seed)
    n_fragile = int(round(task.dim * task.fragile_fraction))
    spread = np.r_[np.full(n_fragile, task.fragile_spread), np.full(task.dim - n_fragile, task.robust_spread)]
    std = np.r_[np.full(n_fragile, task.fragile_std), np.full(task.dim - n_fragile, task.robust_std)]
    means = rng.standard_normal((task.n_classes, task.dim)) * spread

    def draw(n):
        y = _balanced_labels(n, task.n_classes, rng)
        x = means[y] + rng.standard_normal((n, task.dim)) * std
        return x, y

    x_train, y_train = draw(task.n_train)
    x_val, y_val = draw(task.n_val)
    x_val = x_val + task.shift * rng.standard_normal(x_val.shape)
    return x_train, y_train, x_val, y_val


def softmax_xent(logits, labels):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


class LearnerEnv:
    """Training-environment contract backed by genuine minibatch SGD.

    The task (data) is fixed by ``task_seed``; :meth:`reset` draws a fresh
    classifier initialisation and batch stream from its ``seed``.
    """

    def __init__(self, task: SyntheticTask | None = None, task_seed: int = 0):
        self.task = task or SyntheticTask()
        self.task_seed = task_seed
        self._data_seed = None
        self.net = None
        self.iteration = 0
        self.trained_indices = set()
        self.augmented_count = 0
        self.original_count = 0
        self.state = None

    def _load_task(self, task_seed):
        if self._data_seed != task_seed:
            self.x_train, self.y_train, self.x_val, self.y_val = make_data(self.task, task_seed)
            self._data_seed = task_seed

    def reset(self, seed=None, task_seed=None) -> EnvState:
        if task_seed is not None:
            self.task_seed = task_seed
        self._load_task(self.task_seed)
        ss = np.random.SeedSequence(seed)
        init_ss, batch_ss = ss.spawn(2)
        t = self.task
        self.net = init_network(init_ss, sizes=(t.dim, t.hidden, t.n_classes))
        self.rng = np.random.default_rng(batch_ss)
        self.iteration = 0
        self._order = np.empty(0, dtype=np.int64)
        self._cursor = 0
        self.trained_indices = set()
        self.augmented_count = 0
        self.original_count = 0
        self.state = self.evaluate()
        return self.state

    def evaluate(self) -> EnvState:
        logits = self.net.forward(self.x_val)
        loss, _ = softmax_xent(logits, self.y_val)
        error = 100.0 * float(np.mean(np.argmax(logits, axis=1) != self.y_val))
        return EnvState(loss, error)

    def _next_indices(self, k):
        # epoch-wise shuffling without replacement
        out = []
        while len(out) < k:
            if self._cursor >= len(self._order):
                self._order = self.rng.permutation(self.task.n_train)
                self._cursor = 0
            take = min(k - len(out), len(self._order) - self._cursor)
            out.extend(self._order[self._cursor : self._cursor + take])
            self._cursor += take
        return np.asarray(out, dtype=np.int64)

    def compose(self, beta: float):
        """One training batch: originals plus noisy copies, ``beta`` per original on average."""
        t = self.task
        idx = self._next_indices(t.batch_size)
        whole = math.floor(beta)
        frac = beta - whole
        extra = (self.rng.random(len(idx)) < frac) if frac > 0.0 else np.zeros(len(idx), dtype=bool)
        copies = whole + extra.astype(np.int64)
        src = np.repeat(idx, copies)
        lo, hi = t.aug_noise
        strength = self.rng.uniform(lo, hi, size=(len(src), 1))
        x_aug = self.x_train[src] + strength * self.rng.standard_normal((len(src), t.dim))
        x = np.concatenate([self.x_train[idx], x_aug])
        y = np.concatenate([self.y_train[idx], self.y_train[src]])
        return x, y, idx, len(src)

    def train_chunk(self, beta: float, iterations: int) -> EnvState:
        if not -1e-9 <= beta <= self.task.beta_max + 1e-9:
            raise ValueError(f"beta {beta} outside [0, {self.task.beta_max}]")
        if iterations == 0:
            return self.state
        lr = self.task.lr
        for _ in range(iterations):
            x, y, idx, n_aug = self.compose(beta)
            self.trained_indices.update(idx.tolist())
            self.original_count += len(idx)
            self.augmented_count += n_aug
            _, grads = backprop(self.net, x, lambda logits: softmax_xent(logits, y))
            for p, g in zip(self.net.params, grads.params):
                p -= lr * g
            self.iteration += 1
        self.state = self.evaluate()
        return self.state

    def training_digest(self) -> str:
        """Hash of the training rows touched so far (checks the validation set stays unseen)."""
        rows = self.x_train[sorted(self.trained_indices)]
        return hashlib.sha256(np.ascontiguousarray(rows).tobytes()).hexdigest()


def classifier(net: MLP, x) -> np.ndarray:
    return np.argmax(net.forward(x), axis=1)
