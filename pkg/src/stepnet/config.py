"""Configuration documents: parsing, validation and per-episode sampling.

Scenario parameters may be given either as a plain number or as an
{"low": a, "high": b} range that is sampled uniformly at every reset, which
is how training randomises link properties across episodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

from .errors import ConfigError
from .kernel import RngStream

SCENARIOS = ("dumbbell", "cartpole")

# Episode step caps when the config does not set one.  CartPole keeps its
# classic 500-step limit; network episodes cut off at 400 steps.
DEFAULT_MAX_STEPS = {"dumbbell": 400, "cartpole": 500}

_TOP_LEVEL_KEYS = {"scenario", "seed", "max_steps", "dumbbell", "cartpole", "agent", "trainer", "sweep"}


def _require_number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {type(value).__name__}")
    if not math.isfinite(value):
        raise ConfigError(f"{path}: must be finite")
    return float(value)


def _require_int(value: Any, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {type(value).__name__}")
    return value


@dataclass(frozen=True)
class ParamSpec:
    """A scalar that is either fixed or drawn uniformly from [low, high]."""

    low: float
    high: float
    integer: bool = False

    @classmethod
    def parse(cls, value: Any, path: str, integer: bool = False) -> "ParamSpec":
        if isinstance(value, Mapping):
            extra = set(value) - {"low", "high"}
            if extra:
                raise ConfigError(f"{path}: unknown range keys {sorted(extra)}")
            if "low" not in value or "high" not in value:
                raise ConfigError(f"{path}: a range needs both 'low' and 'high'")
            low = _require_number(value["low"], f"{path}.low")
            high = _require_number(value["high"], f"{path}.high")
        else:
            low = high = _require_number(value, path)
        if low > high:
            raise ConfigError(f"{path}: low {low} exceeds high {high}")
        if low <= 0:
            raise ConfigError(f"{path}: must be positive")
        return cls(low, high, integer)

    def sample(self, rng: RngStream) -> float:
        value = self.low if self.low == self.high else rng.uniform(self.low, self.high)
        if self.integer:
            return float(round(value))
        return value

    @property
    def fixed(self) -> bool:
        return self.low == self.high

    def describe(self) -> Any:
        if self.fixed:
            return int(self.low) if self.integer else self.low
        return {"low": self.low, "high": self.high}


@dataclass(frozen=True)
class FlowSpec:
    start_s: float = 0.0
    size_pkts: Optional[int] = None  # None means the flow never runs dry

    @classmethod
    def parse(cls, value: Any, path: str) -> "FlowSpec":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected an object")
        extra = set(value) - {"start_s", "size_pkts"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        start_s = _require_number(value.get("start_s", 0.0), f"{path}.start_s")
        if start_s < 0:
            raise ConfigError(f"{path}.start_s: must be non-negative")
        raw_size = value.get("size_pkts", "unbounded")
        if raw_size in ("unbounded", None):
            size = None
        else:
            size = _require_int(raw_size, f"{path}.size_pkts")
            if size <= 0:
                raise ConfigError(f"{path}.size_pkts: must be positive")
        return cls(start_s, size)


@dataclass(frozen=True)
class DumbbellConfig:
    bandwidth_mbps: ParamSpec = ParamSpec(96.0, 96.0)
    rtt_ms: ParamSpec = ParamSpec(40.0, 40.0)
    buffer_pkts: ParamSpec = ParamSpec(440.0, 440.0, integer=True)
    flows: tuple[FlowSpec, ...] = (FlowSpec(),)

    @classmethod
    def parse(cls, value: Any, path: str) -> "DumbbellConfig":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected an object")
        extra = set(value) - {"bandwidth_mbps", "rtt_ms", "buffer_pkts", "flows"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        defaults = cls()
        bandwidth = (
            ParamSpec.parse(value["bandwidth_mbps"], f"{path}.bandwidth_mbps")
            if "bandwidth_mbps" in value
            else defaults.bandwidth_mbps
        )
        rtt = ParamSpec.parse(value["rtt_ms"], f"{path}.rtt_ms") if "rtt_ms" in value else defaults.rtt_ms
        buffer_pkts = (
            ParamSpec.parse(value["buffer_pkts"], f"{path}.buffer_pkts", integer=True)
            if "buffer_pkts" in value
            else defaults.buffer_pkts
        )
        raw_flows = value.get("flows", [{}])
        if not isinstance(raw_flows, list) or not raw_flows:
            raise ConfigError(f"{path}.flows: expected a non-empty list")
        flows = tuple(FlowSpec.parse(f, f"{path}.flows[{i}]") for i, f in enumerate(raw_flows))
        return cls(bandwidth, rtt, buffer_pkts, flows)


@dataclass(frozen=True)
class AgentConfig:
    """Knobs of the window controller attached to each flow."""

    loss_done_threshold: float = 0.5
    max_steps: int = 400
    ssthresh_pkts: float = 64.0
    cwnd_cap_pkts: float = 2.0**16
    step_rtt_multiplier: float = 2.0
    initial_cwnd_pkts: float = 1.0

    @classmethod
    def parse(cls, value: Any, path: str) -> "AgentConfig":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected an object")
        known = {
            "loss_done_threshold",
            "max_steps",
            "ssthresh_pkts",
            "cwnd_cap_pkts",
            "step_rtt_multiplier",
            "initial_cwnd_pkts",
        }
        extra = set(value) - known
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        defaults = cls()
        threshold = _require_number(
            value.get("loss_done_threshold", defaults.loss_done_threshold), f"{path}.loss_done_threshold"
        )
        if not 0 < threshold <= 1:
            raise ConfigError(f"{path}.loss_done_threshold: must lie in (0, 1]")
        max_steps = _require_int(value.get("max_steps", defaults.max_steps), f"{path}.max_steps")
        if max_steps <= 0:
            raise ConfigError(f"{path}.max_steps: must be positive")
        ssthresh = _require_number(value.get("ssthresh_pkts", defaults.ssthresh_pkts), f"{path}.ssthresh_pkts")
        if ssthresh < 2:
            raise ConfigError(f"{path}.ssthresh_pkts: must be at least 2")
        cap = _require_number(value.get("cwnd_cap_pkts", defaults.cwnd_cap_pkts), f"{path}.cwnd_cap_pkts")
        if cap < 1:
            raise ConfigError(f"{path}.cwnd_cap_pkts: must be at least 1")
        multiplier = _require_number(
            value.get("step_rtt_multiplier", defaults.step_rtt_multiplier), f"{path}.step_rtt_multiplier"
        )
        if multiplier <= 0:
            raise ConfigError(f"{path}.step_rtt_multiplier: must be positive")
        initial = _require_number(
            value.get("initial_cwnd_pkts", defaults.initial_cwnd_pkts), f"{path}.initial_cwnd_pkts"
        )
        if initial < 1:
            raise ConfigError(f"{path}.initial_cwnd_pkts: must be at least 1")
        return cls(threshold, max_steps, ssthresh, cap, multiplier, initial)


@dataclass(frozen=True)
class CartPoleConfig:
    max_episode_steps: int = 500

    @classmethod
    def parse(cls, value: Any, path: str) -> "CartPoleConfig":
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected an object")
        extra = set(value) - {"max_episode_steps"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        cap = _require_int(value.get("max_episode_steps", cls.max_episode_steps), f"{path}.max_episode_steps")
        if cap <= 0:
            raise ConfigError(f"{path}.max_episode_steps: must be positive")
        return cls(cap)


@dataclass(frozen=True)
class EnvConfig:
    scenario: str
    seed: int = 0
    max_steps: int = 400
    dumbbell: DumbbellConfig = field(default_factory=DumbbellConfig)
    cartpole: CartPoleConfig = field(default_factory=CartPoleConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    raw: Mapping[str, Any] = field(default_factory=dict, compare=False)


def parse_config(document: Any) -> EnvConfig:
    if isinstance(document, EnvConfig):
        return document
    if not isinstance(document, Mapping):
        raise ConfigError("config: expected an object at the top level")
    extra = set(document) - _TOP_LEVEL_KEYS
    if extra:
        raise ConfigError(f"config: unknown keys {sorted(extra)}")
    scenario = document.get("scenario")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: must be one of {list(SCENARIOS)}, got {scenario!r}")
    seed = _require_int(document.get("seed", 0), "seed")
    if seed < 0:
        raise ConfigError("seed: must be non-negative")
    dumbbell = DumbbellConfig.parse(document["dumbbell"], "dumbbell") if "dumbbell" in document else DumbbellConfig()
    cartpole = CartPoleConfig.parse(document["cartpole"], "cartpole") if "cartpole" in document else CartPoleConfig()
    agent = AgentConfig.parse(document["agent"], "agent") if "agent" in document else AgentConfig()
    if "max_steps" in document:
        max_steps = _require_int(document["max_steps"], "max_steps")
        if max_steps <= 0:
            raise ConfigError("max_steps: must be positive")
    elif scenario == "cartpole":
        max_steps = cartpole.max_episode_steps
    else:
        max_steps = DEFAULT_MAX_STEPS[scenario]
    return EnvConfig(
        scenario=scenario,
        seed=seed,
        max_steps=max_steps,
        dumbbell=dumbbell,
        cartpole=cartpole,
        agent=agent,
        raw=dict(document),
    )


def load_config(path: str) -> EnvConfig:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            document = json.load(handle)
    except FileNotFoundError:
        raise
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(document)


def config_hash(document: Mapping[str, Any]) -> str:
    """Stable digest of a config document, recorded in checkpoints."""
    import hashlib

    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
