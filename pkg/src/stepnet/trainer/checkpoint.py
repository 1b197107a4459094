"""Versioned policy checkpoints.

The on-disk form is canonical JSON (sorted keys, fixed indent, trailing
newline) so that save -> load -> save is byte-identical; floats survive via
repr round-tripping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import CorruptCheckpoint
from .network import Mlp

FORMAT_VERSION = 1

_REQUIRED_KEYS = {
    "format_version",
    "observation_space",
    "action_space",
    "action_grid",
    "hidden",
    "parameters",
    "trainer_config",
    "config_hash",
    "train_steps",
    "env_steps",
}


@dataclass
class PolicyCheckpoint:
    observation_space: dict[str, Any]
    action_space: dict[str, Any]
    action_grid: int
    hidden: tuple[int, ...]
    parameters: list[np.ndarray]
    trainer_config: dict[str, Any] = field(default_factory=dict)
    config_hash: str = ""
    train_steps: int = 0
    env_steps: int = 0

    @property
    def obs_dim(self) -> int:
        return len(self.observation_space["low"])

    @property
    def n_actions(self) -> int:
        if self.action_space["type"] == "discrete":
            return int(self.action_space["n"])
        return self.action_grid

    def build_network(self) -> Mlp:
        net = Mlp(self.obs_dim, self.n_actions, self.hidden)
        net.set_parameters(self.parameters)
        return net

    def to_document(self) -> dict[str, Any]:
        return {
            "format_version": FORMAT_VERSION,
            "observation_space": self.observation_space,
            "action_space": self.action_space,
            "action_grid": self.action_grid,
            "hidden": list(self.hidden),
            "parameters": [p.tolist() for p in self.parameters],
            "trainer_config": self.trainer_config,
            "config_hash": self.config_hash,
            "train_steps": self.train_steps,
            "env_steps": self.env_steps,
        }


def checkpoint_bytes(ckpt: PolicyCheckpoint) -> bytes:
    return (json.dumps(ckpt.to_document(), sort_keys=True, indent=2) + "\n").encode()


def save_checkpoint(path, ckpt: PolicyCheckpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(ckpt))


def load_checkpoint(path) -> PolicyCheckpoint:
    try:
        with open(path, "rb") as fh:
            document = json.load(fh)
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise CorruptCheckpoint(f"{path}: not a readable checkpoint: {exc}") from exc
    if not isinstance(document, dict):
        raise CorruptCheckpoint(f"{path}: expected a JSON object at top level")
    missing = _REQUIRED_KEYS - set(document)
    if missing:
        raise CorruptCheckpoint(f"{path}: missing keys {sorted(missing)}")
    version = document["format_version"]
    if version != FORMAT_VERSION:
        raise CorruptCheckpoint(
            f"{path}: format version {version!r} unsupported (expected {FORMAT_VERSION})"
        )
    try:
        params = [np.asarray(p, dtype=np.float64) for p in document["parameters"]]
        ckpt = PolicyCheckpoint(
            observation_space=dict(document["observation_space"]),
            action_space=dict(document["action_space"]),
            action_grid=int(document["action_grid"]),
            hidden=tuple(int(h) for h in document["hidden"]),
            parameters=params,
            trainer_config=dict(document["trainer_config"]),
            config_hash=str(document["config_hash"]),
            train_steps=int(document["train_steps"]),
            env_steps=int(document["env_steps"]),
        )
    except (TypeError, ValueError, KeyError) as exc:
        raise CorruptCheckpoint(f"{path}: malformed field: {exc}") from exc
    for p in ckpt.parameters:
        if not np.all(np.isfinite(p)):
            raise CorruptCheckpoint(f"{path}: non-finite parameters")
    try:
        ckpt.build_network()
    except ValueError as exc:
        raise CorruptCheckpoint(f"{path}: parameter shapes inconsistent: {exc}") from exc
    return ckpt


def require_spaces(ckpt: PolicyCheckpoint, observation_space, action_space) -> None:
    """Reject a checkpoint whose spaces do not match the environment's."""
    if ckpt.observation_space != observation_space.describe():
        raise CorruptCheckpoint(
            "checkpoint observation space does not match the scenario: "
            f"{ckpt.observation_space} vs {observation_space.describe()}"
        )
    if ckpt.action_space != action_space.describe():
        raise CorruptCheckpoint(
            "checkpoint action space does not match the scenario: "
            f"{ckpt.action_space} vs {action_space.describe()}"
        )
