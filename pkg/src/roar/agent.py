"""DQN agent: epsilon-greedy policy, uniform experience replay, target network."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np

from roar.qnet import AdamState, QNetwork, adam_step, init_network, load_checkpoint, loss_and_grad, save_checkpoint

N_ACTIONS = 3
NULL, INCREASE, DECREASE = 0, 1, 2


class AgentError(Exception):
    pass


class InsufficientDataError(AgentError):
    pass


class CheckpointError(AgentError, ValueError):
    pass


class Transition(NamedTuple):
    state: tuple
    action: int
    reward: float
    next_state: tuple
    terminal: bool

    def validate(self):
        if self.action not in (NULL, INCREASE, DECREASE):
            raise ValueError(f"invalid action {self.action}")
        if not np.isfinite(self.reward):
            raise ValueError("reward must be finite")
        return self

    def to_list(self) -> list:
        return [
            [float(v) for v in self.state],
            int(self.action),
            float(self.reward),
            [float(v) for v in self.next_state],
            bool(self.terminal),
        ]

    @classmethod
    def from_list(cls, x) -> "Transition":
        s, a, r, s2, done = x
        return cls(tuple(float(v) for v in s), int(a), float(r), tuple(float(v) for v in s2), bool(done))


class ReplayBuffer:
    """Bounded FIFO store of transitions with uniform sampling."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.entries: deque = deque(maxlen=capacity)

    def __len__(self):
        return len(self.entries)

    def store(self, t: Transition) -> None:
        self.entries.append(t.validate())

    def sample(self, batch_size: int, rng) -> list:
        """``batch_size`` distinct entries drawn uniformly without replacement."""
        if len(self.entries) < batch_size:
            raise InsufficientDataError(f"buffer holds {len(self.entries)} < {batch_size} transitions")
        idx = rng.choice(len(self.entries), size=batch_size, replace=False)
        return [self.entries[i] for i in idx]


@dataclass
class AgentConfig:
    lr: float = 0.001
    gamma: float = 0.99
    warmup_steps: int = 50
    batch_size: int = 32
    buffer_capacity: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_steps: int = 200
    target_sync_interval: int = 20
    updates_per_step: int = 1
    huber: bool = False

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not (0.0 <= self.epsilon_start <= 1.0 and 0.0 <= self.epsilon_end <= 1.0):
            raise ValueError("epsilon bounds must lie in [0, 1]")
        if self.batch_size < 1 or self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size must be in [1, buffer_capacity]")
        if self.epsilon_decay_steps < 0 or self.warmup_steps < 0:
            raise ValueError("step counts must be non-negative")
        if self.target_sync_interval < 1 or self.updates_per_step < 1:
            raise ValueError("target_sync_interval and updates_per_step must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown agent config keys: {sorted(unknown)}")
        return cls(**d)


def epsilon_at(config: AgentConfig, step: int) -> float:
    """Linear decay from epsilon_start to epsilon_end, constant afterwards."""
    if step >= config.epsilon_decay_steps:
        return config.epsilon_end
    frac = step / config.epsilon_decay_steps
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


def greedy_action(q) -> int:
    # np.argmax returns the first maximum, i.e. the lowest action id on ties
    return int(np.argmax(q))


class DqnAgent:
    """``network`` overrides the default Q-network (e.g. a one-hot linear table in tests)."""

    def __init__(self, config: AgentConfig | None = None, seed=None, network=None):
        self.config = config or AgentConfig()
        self.online = network.clone() if network is not None else init_network(seed)
        self.target = self.online.clone()
        self.opt = AdamState(lr=self.config.lr)
        self.buffer = ReplayBuffer(self.config.buffer_capacity)
        self.step_count = 0
        self.update_count = 0

    @property
    def epsilon(self) -> float:
        return epsilon_at(self.config, self.step_count)

    def select_action(self, state, epsilon: float, rng) -> int:
        """Uniform random action with probability ``epsilon``, else greedy."""
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
        q = self.online.forward(state)
        if rng.random() < epsilon:
            return int(rng.integers(N_ACTIONS))
        return greedy_action(q)

    def act(self, state, rng) -> int:
        return self.select_action(state, self.epsilon, rng)

    def store(self, t: Transition) -> None:
        self.buffer.store(t)

    def td_targets(self, batch) -> np.ndarray:
        rewards = np.array([t.reward for t in batch], dtype=np.float64)
        terminal = np.array([t.terminal for t in batch], dtype=bool)
        next_q = self.target.forward(np.array([t.next_state for t in batch], dtype=np.float64))
        bootstrap = np.where(terminal, 0.0, next_q.max(axis=1))
        return rewards + self.config.gamma * bootstrap

    def train_step(self, rng):
        """Advance one agent step; update the online net once warm-up is over.

        Returns the last minibatch loss, or ``None`` when no update ran.
        """
        cfg = self.config
        step = self.step_count
        self.step_count += 1
        if step < cfg.warmup_steps or len(self.buffer) < cfg.batch_size:
            return None
        loss = None
        for _ in range(cfg.updates_per_step):
            batch = self.buffer.sample(cfg.batch_size, rng)
            targets = self.td_targets(batch)
            states = np.array([t.state for t in batch], dtype=np.float64)
            actions = [t.action for t in batch]
            loss, grads = loss_and_grad(self.online, states, actions, targets, huber=cfg.huber)
            adam_step(self.online, grads, self.opt, cfg.lr)
            self.update_count += 1
            if self.update_count % cfg.target_sync_interval == 0:
                self.target = self.online.clone()
        return loss

    def checkpoint(self) -> str:
        """Serialise to a JSON string (byte-stable for identical agents)."""
        envelope = {
            "qnet": save_checkpoint(self.online),
            "target": save_checkpoint(self.target),
            "opt_state": self.opt.to_dict(),
            "buffer": [t.to_list() for t in self.buffer.entries],
            "step_count": self.step_count,
            "update_count": self.update_count,
            "config": asdict(self.config),
        }
        return json.dumps(envelope, sort_keys=True)

    @classmethod
    def restore(cls, form: str) -> "DqnAgent":
        try:
            d = json.loads(form)
            agent = cls.__new__(cls)
            agent.config = AgentConfig.from_dict(d["config"])
            agent.online, _ = load_checkpoint(d["qnet"])
            agent.target, _ = load_checkpoint(d["target"])
            if not isinstance(agent.online, QNetwork) or not isinstance(agent.target, QNetwork):
                raise CheckpointError("checkpoint networks are not Q-networks")
            agent.opt = AdamState.from_dict(d["opt_state"])
            agent.buffer = ReplayBuffer(agent.config.buffer_capacity)
            for item in d["buffer"]:
                agent.buffer.store(Transition.from_list(item))
            agent.step_count = int(d["step_count"])
            agent.update_count = int(d.get("update_count", 0))
        except CheckpointError:
            raise
        except (ValueError, KeyError, TypeError, IndexError) as exc:
            raise CheckpointError(f"corrupt agent checkpoint: {exc}") from exc
        return agent


class FixedAgent:
    """Always takes the null action; holds the OAR at its initial value."""

    step_count = 0

    def act(self, state, rng) -> int:
        return NULL

    def store(self, t: Transition) -> None:
        pass

    def train_step(self, rng):
        return None
