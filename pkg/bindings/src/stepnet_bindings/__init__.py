"""Gym-convention bindings over the native simulation environment.

make() builds a native environment behind a BoundEnvironment handle whose
reset/step/close follow the familiar calling convention, with per-agent
string-keyed mappings throughout. Every number crosses the boundary
untouched; the handle holds no logic of its own, so binding-driven
trajectories are identical to natively driven ones. Native errors
propagate unchanged, message and type alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional

from stepnet import Box, Discrete, Environment
from stepnet.errors import ClosedEnvironment

SCENARIOS = ("cartpole", "dumbbell")

__version__ = "0.1.0"


@dataclass(frozen=True)
class DiscreteSpace:
    """n mutually exclusive actions, numbered 0 to n - 1."""

    n: int


@dataclass(frozen=True)
class BoxSpace:
    """Real vectors with per-dimension closed bounds."""

    low: tuple[float, ...]
    high: tuple[float, ...]

    @property
    def shape(self) -> tuple[int, ...]:
        return (len(self.low),)


def _describe(space: Any):
    if isinstance(space, Discrete):
        return DiscreteSpace(space.n)
    if isinstance(space, Box):
        return BoxSpace(tuple(space.low), tuple(space.high))
    raise TypeError(f"native environment exposed an unknown space: {space!r}")


class BoundEnvironment:
    """Exactly one live native environment; unusable once closed."""

    def __init__(self, env: Environment):
        self._env = env
        self._closed = False
        self.observation_space = _describe(env.observation_space)
        self.action_space = _describe(env.action_space)

    @property
    def closed(self) -> bool:
        return self._closed

    @property
    def agents(self) -> tuple[str, ...]:
        """Agent ids the next step() call must supply actions for."""
        self._require_open()
        return self._env.agents

    def reset(self, seed: Optional[int] = None) -> dict[str, tuple[float, ...]]:
        self._require_open()
        return self._env.reset(seed)

    def step(self, actions: Mapping[str, Any]):
        """Apply per-agent actions; returns (observations, rewards, dones, info)."""
        self._require_open()
        result = self._env.step(actions)
        info = {
            "episode_done": result.episode_done,
            "time_ns": self._env.now,
            "steps": self._env.steps,
        }
        return result.observations, result.rewards, result.dones, info

    def close(self) -> None:
        """Release the native environment. Safe to call more than once."""
        if not self._closed:
            self._env.close()
            self._closed = True

    def _require_open(self) -> None:
        if self._closed:
            raise ClosedEnvironment("environment is closed")


def make(
    scenario: str,
    config: Optional[Mapping[str, Any]] = None,
    seed: Optional[int] = None,
) -> BoundEnvironment:
    """Build a native environment for `scenario` behind a handle.

    `config` carries the scenario's configuration sections; a `scenario`
    key inside it is superseded by the explicit argument. Invalid
    configurations raise the native errors with their messages intact.
    """
    if scenario not in SCENARIOS:
        names = ", ".join(repr(name) for name in SCENARIOS)
        raise ValueError(f"unknown scenario {scenario!r}: valid names are {names}")
    document = dict(config or {})
    document["scenario"] = scenario
    return BoundEnvironment(Environment(document, seed=seed))


__all__ = [
    "BoundEnvironment",
    "BoxSpace",
    "DiscreteSpace",
    "SCENARIOS",
    "make",
    "__version__",
]
