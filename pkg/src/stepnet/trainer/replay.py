"""Experience store: a fixed-capacity ring buffer with uniform sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Transition:
    """One (s, a, r, s', done) tuple collected by a rollout worker."""

    observation: tuple[float, ...]
    action: int
    reward: float
    next_observation: tuple[float, ...]
    done: bool
    agent_id: str


@dataclass(frozen=True)
class Batch:
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_observations: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Ring buffer over preallocated arrays; oldest entries evicted first."""

    def __init__(self, capacity: int, obs_dim: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        if obs_dim < 1:
            raise ValueError(f"obs_dim must be >= 1, got {obs_dim}")
        self.capacity = capacity
        self.obs_dim = obs_dim
        self._obs = np.empty((capacity, obs_dim), dtype=np.float64)
        self._actions = np.empty(capacity, dtype=np.int64)
        self._rewards = np.empty(capacity, dtype=np.float64)
        self._next_obs = np.empty((capacity, obs_dim), dtype=np.float64)
        self._dones = np.empty(capacity, dtype=np.float64)
        self._agent_ids: list[str] = [""] * capacity
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, transition: Transition) -> None:
        if len(transition.observation) != self.obs_dim:
            raise ValueError(
                f"observation length {len(transition.observation)} != {self.obs_dim}"
            )
        if len(transition.next_observation) != self.obs_dim:
            raise ValueError(
                f"next observation length {len(transition.next_observation)} != {self.obs_dim}"
            )
        i = self._cursor
        self._obs[i] = transition.observation
        self._actions[i] = transition.action
        self._rewards[i] = transition.reward
        self._next_obs[i] = transition.next_observation
        self._dones[i] = 1.0 if transition.done else 0.0
        self._agent_ids[i] = transition.agent_id
        self._cursor = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def extend(self, transitions: Sequence[Transition]) -> None:
        for t in transitions:
            self.add(t)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Draw batch_size transitions uniformly, with replacement."""
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        if self._size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(
            observations=self._obs[idx].copy(),
            actions=self._actions[idx].copy(),
            rewards=self._rewards[idx].copy(),
            next_observations=self._next_obs[idx].copy(),
            dones=self._dones[idx].copy(),
        )

    def contents(self) -> list[Transition]:
        """Current transitions in insertion order (oldest first). For tests."""
        if self._size < self.capacity:
            order = range(self._size)
        else:
            order = [(self._cursor + k) % self.capacity for k in range(self.capacity)]
        return [
            Transition(
                observation=tuple(self._obs[i]),
                action=int(self._actions[i]),
                reward=float(self._rewards[i]),
                next_observation=tuple(self._next_obs[i]),
                done=bool(self._dones[i]),
                agent_id=self._agent_ids[i],
            )
            for i in order
        ]
