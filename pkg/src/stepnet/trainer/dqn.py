"""Q-learning core: config, exploration policy, action grid and update rule."""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from ..config import ConfigError
from ..env import Box, Discrete
from ..errors import NonFiniteLoss, OutOfRange
from .network import Mlp, MomentumSgd, td_loss_and_grads
from .replay import ReplayBuffer


def derive_seed(root: int, label: str) -> int:
    """Stable 64-bit sub-seed, same scheme as the kernel's named streams."""
    digest = hashlib.sha256(f"{root}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.99
    learning_rate: float = 1e-3
    momentum: float = 0.9
    buffer_capacity: int = 100_000
    batch_size: int = 64
    target_sync: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    warmup_steps: int = 1000
    train_freq: int = 1
    total_steps: int = 50_000
    workers: int = 1
    action_grid: int = 11
    param_sync: int = 500
    hidden: tuple[int, ...] = (64, 64)
    log_interval: int = 1000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.buffer_capacity < 1:
            raise ConfigError(f"buffer_capacity must be >= 1, got {self.buffer_capacity}")
        if not 1 <= self.batch_size <= self.buffer_capacity:
            raise ConfigError(
                f"batch_size must be in [1, buffer_capacity], got {self.batch_size}"
            )
        if self.target_sync < 1:
            raise ConfigError(f"target_sync must be >= 1, got {self.target_sync}")
        for name in ("eps_start", "eps_end"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.eps_decay_steps < 1:
            raise ConfigError(f"eps_decay_steps must be >= 1, got {self.eps_decay_steps}")
        if self.warmup_steps < self.batch_size:
            raise ConfigError(
                f"warmup_steps must be >= batch_size, got {self.warmup_steps}"
            )
        if self.train_freq < 1:
            raise ConfigError(f"train_freq must be >= 1, got {self.train_freq}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.action_grid < 2:
            raise ConfigError(f"action_grid must be >= 2, got {self.action_grid}")
        if self.param_sync < 1:
            raise ConfigError(f"param_sync must be >= 1, got {self.param_sync}")
        if self.log_interval < 1:
            raise ConfigError(f"log_interval must be >= 1, got {self.log_interval}")

    @classmethod
    def parse(cls, value: Mapping[str, Any], path: str = "trainer") -> "TrainerConfig":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path} must be a mapping, got {type(value).__name__}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(value) - names
        if unknown:
            raise ConfigError(f"unknown keys in {path}: {sorted(unknown)}")
        kwargs = dict(value)
        if "hidden" in kwargs:
            hidden = kwargs["hidden"]
            if not isinstance(hidden, (list, tuple)) or not hidden:
                raise ConfigError(f"{path}.hidden must be a non-empty list")
            kwargs["hidden"] = tuple(int(h) for h in hidden)
        return cls(**kwargs)

    def describe(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["hidden"] = list(self.hidden)
        return out


def epsilon_at(step: int, cfg: TrainerConfig) -> float:
    """Linear schedule from eps_start to eps_end over eps_decay_steps."""
    if step >= cfg.eps_decay_steps:
        return cfg.eps_end
    frac = max(step, 0) / cfg.eps_decay_steps
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def act(net: Mlp, observation, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy action index; greedy ties go to the lowest index.

    Exploration is decided before any network evaluation, so a fully random
    policy (epsilon = 1) never pays for a forward pass.
    """
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(net.out_dim))
    return int(np.argmax(net.q_values(observation)))


def discretise_action(
    index: int, low: Sequence[float], high: Sequence[float], k: int
) -> tuple[float, ...]:
    """Grid point index -> continuous action: low + index*(high-low)/(k-1)."""
    if k < 2:
        raise ConfigError(f"grid size must be >= 2, got {k}")
    if not 0 <= index < k:
        raise OutOfRange(f"grid index {index} outside [0, {k})")
    return tuple(lo + index * (hi - lo) / (k - 1) for lo, hi in zip(low, high))


class ActionMapper:
    """Translates network output indices into actions the scenario accepts."""

    def __init__(self, action_space: Any, grid: int):
        self.space = action_space
        self.grid = grid
        if isinstance(action_space, Discrete):
            self.n_actions = action_space.n
        elif isinstance(action_space, Box):
            if grid < 2:
                raise ConfigError(f"grid size must be >= 2, got {grid}")
            self.n_actions = grid
        else:
            raise ConfigError(f"unsupported action space: {action_space!r}")

    def to_env(self, index: int) -> Any:
        if not 0 <= index < self.n_actions:
            raise OutOfRange(f"action index {index} outside [0, {self.n_actions})")
        if isinstance(self.space, Discrete):
            return index
        return discretise_action(index, self.space.low, self.space.high, self.grid)


class DqnLearner:
    """Online/target network pair plus replay buffer and the update step."""

    def __init__(self, obs_dim: int, n_actions: int, cfg: TrainerConfig):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.n_actions = n_actions
        init_rng = np.random.default_rng(derive_seed(cfg.seed, "net-init"))
        self.online = Mlp(obs_dim, n_actions, cfg.hidden, init_rng)
        self.target = self.online.clone()
        self.optimiser = MomentumSgd(cfg.learning_rate, cfg.momentum)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, obs_dim)
        self._sample_rng = np.random.default_rng(derive_seed(cfg.seed, "batch-sample"))
        self.train_steps = 0
        self.env_steps = 0

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.cfg.batch_size, self.cfg.warmup_steps)

    def td_targets(self, batch) -> np.ndarray:
        q_next = self.target.forward(batch.next_observations)
        best = q_next.max(axis=1)
        return batch.rewards + self.cfg.gamma * (1.0 - batch.dones) * best

    def train_step(self) -> float:
        """One gradient step on a sampled batch; syncs the target on schedule."""
        batch = self.buffer.sample(self.cfg.batch_size, self._sample_rng)
        targets = self.td_targets(batch)
        loss, grads = td_loss_and_grads(
            self.online, batch.observations, batch.actions, targets
        )
        if not np.isfinite(loss):
            raise NonFiniteLoss(
                f"loss {loss} after {self.train_steps} updates "
                f"({self.env_steps} env steps); try a lower learning rate"
            )
        self.optimiser.step(self.online.parameters(), grads)
        self.train_steps += 1
        if self.train_steps % self.cfg.target_sync == 0:
            self.target.set_parameters(self.online.parameters())
        return loss
