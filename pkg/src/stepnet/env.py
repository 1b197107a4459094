"""Multi-agent RL environment embedded in the event simulation.

The environment facade owns a kernel, a signal bus and two support
components.  The stepper turns STEP_REQUEST signals into kernel events and
groups simultaneous requests; the broker holds the latest action per agent
and collects observation/reward/done reports.  Agents and scenario
components talk to these only through signals, so either side can be
replaced without touching the other.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Optional, Sequence

from .config import EnvConfig, parse_config
from .errors import (
    ClosedEnvironment,
    DuplicateAgent,
    EnvironmentFault,
    EpisodeOver,
    InvalidAction,
    MissingAction,
    ScenarioError,
    StepnetError,
    UnknownAgent,
    ZeroDuration,
)
from .kernel import EXHAUSTED, Event, Kernel, STEP, add_simtime
from .signals import (
    ACTION_BROADCAST,
    AGENT_DEREGISTER,
    AGENT_REGISTER,
    ActionBroadcast,
    AgentDeregister,
    AgentRegister,
    DONE_REPORT,
    DoneReport,
    OBS_REPORT,
    ObsReport,
    REWARD_REPORT,
    RewardReport,
    STEP_REQUEST,
    SignalBus,
    StepRequest,
)


@dataclass(frozen=True)
class Discrete:
    """Action space of n choices, numbered 0 to n - 1."""

    n: int

    def contains(self, action: Any) -> bool:
        if isinstance(action, bool) or not isinstance(action, int):
            return False
        return 0 <= action < self.n

    def describe(self) -> dict:
        return {"type": "discrete", "n": self.n}


@dataclass(frozen=True)
class Box:
    """A box of real vectors; one (low, high) pair per dimension."""

    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        if len(self.low) != len(self.high):
            raise ValueError("low and high must have the same length")

    @property
    def size(self) -> int:
        return len(self.low)

    def contains(self, value: Any) -> bool:
        if not isinstance(value, Sequence) or isinstance(value, (str, bytes)):
            return False
        if len(value) != self.size:
            return False
        for v, lo, hi in zip(value, self.low, self.high):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                return False
            if not math.isfinite(v) or v < lo or v > hi:
                return False
        return True

    def describe(self) -> dict:
        return {"type": "box", "low": list(self.low), "high": list(self.high)}


class RlAgent(ABC):
    """Callback surface the environment drives at every step boundary."""

    @abstractmethod
    def get_obs(self) -> Sequence[float]: ...

    @abstractmethod
    def get_reward(self) -> float: ...

    @abstractmethod
    def get_done(self) -> bool: ...

    @abstractmethod
    def set_action(self, action: Any) -> None: ...


@dataclass
class StepResult:
    """Per-agent maps for one environment step; the three share one key set."""

    observations: dict[str, tuple[float, ...]]
    rewards: dict[str, float]
    dones: dict[str, bool]
    episode_done: bool


class Stepper:
    """Schedules STEP events from step requests, one per distinct timestamp."""

    def __init__(self, kernel: Kernel, bus: SignalBus):
        self._kernel = kernel
        self._pending: dict[str, int] = {}
        self._groups: dict[int, set[str]] = {}
        self._events: dict[int, Event] = {}
        bus.subscribe(STEP_REQUEST, "stepper", self._on_request)
        bus.subscribe(AGENT_DEREGISTER, "stepper", self._on_deregister)
        # STEP events are intercepted before dispatch; the handler exists only
        # so a stray drain of the kernel cannot fail on an unknown target.
        kernel.register_component("stepper", lambda event: None)

    def _on_request(self, signal) -> None:
        request: StepRequest = signal.payload
        self._drop(request.agent_id)
        group = self._groups.get(request.at)
        if group is None:
            group = set()
            self._groups[request.at] = group
            self._events[request.at] = self._kernel.schedule(request.at, "stepper", STEP)
        group.add(request.agent_id)
        self._pending[request.agent_id] = request.at

    def _on_deregister(self, signal) -> None:
        self._drop(signal.payload.agent_id)

    def _drop(self, agent_id: str) -> None:
        at = self._pending.pop(agent_id, None)
        if at is None:
            return
        group = self._groups[at]
        group.discard(agent_id)
        if not group:
            del self._groups[at]
            self._kernel.cancel(self._events.pop(at))

    def pending_step_of(self, agent_id: str) -> Optional[int]:
        return self._pending.get(agent_id)

    def take_due(self, timestamp: int) -> tuple[str, ...]:
        """Consume the agent group stepping at this timestamp, sorted by id."""
        group = self._groups.pop(timestamp, None)
        self._events.pop(timestamp, None)
        if not group:
            raise ScenarioError(f"step event at {timestamp} ns has no agents attached")
        for agent_id in group:
            del self._pending[agent_id]
        return tuple(sorted(group))


class Broker:
    """Latest action in, collected reports out; wiped at every step boundary."""

    def __init__(self, bus: SignalBus):
        self._bus = bus
        self.latest_actions: dict[str, Any] = {}
        self.observations: dict[str, tuple[float, ...]] = {}
        self.rewards: dict[str, float] = {}
        self.dones: dict[str, bool] = {}
        bus.subscribe(OBS_REPORT, "broker", self._on_obs)
        bus.subscribe(REWARD_REPORT, "broker", self._on_reward)
        bus.subscribe(DONE_REPORT, "broker", self._on_done)
        bus.subscribe(AGENT_DEREGISTER, "broker", self._on_deregister)

    def _on_obs(self, signal) -> None:
        self.observations[signal.payload.agent_id] = signal.payload.values

    def _on_reward(self, signal) -> None:
        self.rewards[signal.payload.agent_id] = signal.payload.value

    def _on_done(self, signal) -> None:
        self.dones[signal.payload.agent_id] = signal.payload.done

    def _on_deregister(self, signal) -> None:
        self.latest_actions.pop(signal.payload.agent_id, None)

    def begin_step(self, actions: Mapping[str, Any]) -> None:
        self.latest_actions = dict(actions)
        self.observations = {}
        self.rewards = {}
        self.dones = {}

    def broadcast(self) -> None:
        for agent_id in sorted(self.latest_actions):
            self._bus.publish(
                ACTION_BROADCAST, "broker", ActionBroadcast(agent_id, self.latest_actions[agent_id])
            )


class Scenario(ABC):
    """What a concrete simulation must provide to live inside the environment."""

    observation_space: Box
    action_space: Any  # Discrete or Box

    @abstractmethod
    def build(self, env: "Environment") -> None:
        """Create components and schedule the events that start the episode."""

    def is_terminal(self) -> bool:
        return False

    def metrics(self) -> dict[str, float]:
        return {}

    def params_used(self) -> dict[str, float]:
        return {}


def make_scenario(config: EnvConfig) -> Scenario:
    if config.scenario == "cartpole":
        from .cartpole import CartPoleScenario

        return CartPoleScenario(config)
    if config.scenario == "dumbbell":
        from .cc_agent import DumbbellScenario

        return DumbbellScenario(config)
    raise ScenarioError(f"no scenario registered under {config.scenario!r}")


def _is_step(event: Event) -> bool:
    return event.kind == STEP


class Environment:
    """reset()/step() facade over one scenario instance.

    reset() rebuilds the whole simulation from configuration and seed, runs
    it to the first step boundary and returns initial observations.  step()
    hands actions to the due agents, resumes the simulation to the next
    boundary and returns per-agent results.
    """

    def __init__(
        self,
        config: Any,
        seed: Optional[int] = None,
        event_sink: Optional[Callable[[Event], None]] = None,
        scenario_factory: Optional[Callable[[EnvConfig], Scenario]] = None,
    ):
        self._config = parse_config(config)
        self._event_sink = event_sink
        self._scenario_factory = scenario_factory or make_scenario
        self._episode_seed = self._config.seed if seed is None else seed
        self._needs_reset = True
        self._episode_done = False
        self._closed = False
        self._build(self._episode_seed)

    @property
    def config(self) -> EnvConfig:
        return self._config

    @property
    def episode_seed(self) -> int:
        return self._episode_seed

    @property
    def now(self) -> int:
        """Current simulation time in nanoseconds."""
        return self.kernel.clock

    @property
    def steps(self) -> int:
        return self._steps

    @property
    def observation_space(self) -> Box:
        return self.scenario.observation_space

    @property
    def action_space(self):
        return self.scenario.action_space

    @property
    def agents(self) -> tuple[str, ...]:
        """Agents currently due for an action, i.e. keys expected by step()."""
        return self._stepping

    def _build(self, seed: int) -> None:
        self.kernel = Kernel(seed, trace=self._event_sink)
        self.bus = SignalBus()
        self.stepper = Stepper(self.kernel, self.bus)
        self.broker = Broker(self.bus)
        self._agents: dict[str, RlAgent] = {}
        self._action_subs: dict[str, Any] = {}
        self._stepping: tuple[str, ...] = ()
        self._steps = 0
        self._episode_done = False
        self.scenario = self._scenario_factory(self._config)
        self.scenario.build(self)

    def reset(self, seed: Optional[int] = None) -> dict[str, tuple[float, ...]]:
        """Rebuild the episode and run to the first step boundary."""
        if self._closed:
            raise ClosedEnvironment("environment is closed")
        if seed is not None:
            self._episode_seed = seed
        self._build(self._episode_seed)
        event = self.kernel.run_until(_is_step)
        if event is EXHAUSTED:
            raise ScenarioError(
                "scenario ran out of events before any agent requested a step; "
                "nothing will ever produce an observation"
            )
        due = self.stepper.take_due(event.timestamp)
        self.broker.begin_step({})
        observations, _, _ = self._collect(due, with_rewards=False)
        self._stepping = due
        self._needs_reset = False
        return observations

    def step(self, actions: Mapping[str, Any]) -> StepResult:
        if self._closed:
            raise ClosedEnvironment("environment is closed")
        if self._needs_reset:
            raise EpisodeOver("reset() must be called before step()")
        if self._episode_done:
            raise EpisodeOver("episode finished; only reset() is accepted now")
        required = set(self._stepping)
        given = set(actions)
        unknown = given - required
        if unknown:
            culprit = sorted(unknown)[0]
            detail = "is not registered" if culprit not in self._agents else "is not due to step now"
            raise UnknownAgent(f"agent {culprit!r} {detail}")
        missing = required - given
        if missing:
            raise MissingAction(f"no action supplied for stepping agent(s) {sorted(missing)}")
        space = self.scenario.action_space
        for agent_id in self._stepping:
            if not space.contains(actions[agent_id]):
                raise InvalidAction(
                    f"action {actions[agent_id]!r} for agent {agent_id!r} "
                    f"is outside the declared action space {space.describe()}"
                )

        self.broker.begin_step(actions)
        try:
            self.broker.broadcast()
        except StepnetError:
            raise
        except Exception as exc:
            self._episode_done = True
            raise EnvironmentFault(f"agent action handler failed: {exc}") from exc

        event = self.kernel.run_until(_is_step)
        self._steps += 1
        if event is EXHAUSTED:
            # The simulation has nothing left to run; close the episode with a
            # final report from every live agent.
            due = tuple(sorted(self._agents))
            exhausted = True
        else:
            due = self.stepper.take_due(event.timestamp)
            exhausted = False

        observations, rewards, dones = self._collect(due, with_rewards=True)
        for agent_id in due:
            if dones[agent_id]:
                self._deregister(agent_id)
        episode_done = (
            exhausted
            or not self._agents
            or self.scenario.is_terminal()
            or self._steps >= self._config.max_steps
        )
        self._episode_done = episode_done
        self._stepping = tuple(a for a in due if not dones[a])
        return StepResult(observations, rewards, dones, episode_done)

    def close(self) -> None:
        self._closed = True

    # -- surface used by scenario components -------------------------------

    def register_agent(self, agent_id: str, agent: RlAgent) -> None:
        """Attach an agent; it will not step until it requests a boundary."""
        if not isinstance(agent_id, str) or not agent_id:
            raise ValueError("agent_id must be a non-empty string")
        if agent_id in self._agents:
            raise DuplicateAgent(f"agent id {agent_id!r} is already taken")
        self._agents[agent_id] = agent

        def deliver(signal) -> None:
            payload: ActionBroadcast = signal.payload
            if payload.agent_id == agent_id:
                agent.set_action(payload.action)

        self._action_subs[agent_id] = self.bus.subscribe(ACTION_BROADCAST, agent_id, deliver)
        self.bus.publish(AGENT_REGISTER, "env", AgentRegister(agent_id))

    def set_next_step(self, agent_id: str, duration_ns: int) -> None:
        """Request the agent's next step boundary duration_ns from now."""
        if agent_id not in self._agents:
            raise UnknownAgent(f"agent {agent_id!r} is not registered")
        if not isinstance(duration_ns, int) or isinstance(duration_ns, bool):
            raise TypeError("duration_ns must be an integer nanosecond count")
        if duration_ns == 0:
            raise ZeroDuration(f"agent {agent_id!r} requested a zero-length step")
        if duration_ns < 0:
            raise ValueError("duration_ns must be positive")
        at = add_simtime(self.kernel.clock, duration_ns)
        self.bus.publish(STEP_REQUEST, agent_id, StepRequest(agent_id, at))

    # -- internals ----------------------------------------------------------

    def _deregister(self, agent_id: str) -> None:
        self.bus.unsubscribe(self._action_subs.pop(agent_id))
        del self._agents[agent_id]
        self.bus.publish(AGENT_DEREGISTER, "env", AgentDeregister(agent_id))

    def _collect(self, due: tuple[str, ...], with_rewards: bool):
        """Run report callbacks for due agents and gather broker output."""
        space = self.scenario.observation_space
        for agent_id in due:
            agent = self._agents[agent_id]
            try:
                raw = agent.get_obs()
                values = tuple(float(v) for v in raw)
                if with_rewards:
                    reward = float(agent.get_reward())
                    done = bool(agent.get_done())
            except StepnetError:
                raise
            except Exception as exc:
                self._episode_done = True
                raise EnvironmentFault(f"agent {agent_id!r} report callback failed: {exc}") from exc
            if len(values) != space.size:
                self._episode_done = True
                raise EnvironmentFault(
                    f"agent {agent_id!r} produced {len(values)} observation values, "
                    f"space expects {space.size}"
                )
            if not all(math.isfinite(v) for v in values):
                self._episode_done = True
                raise EnvironmentFault(f"agent {agent_id!r} produced non-finite observation {values}")
            self.bus.publish(OBS_REPORT, agent_id, ObsReport(agent_id, values))
            if with_rewards:
                if not math.isfinite(reward):
                    self._episode_done = True
                    raise EnvironmentFault(f"agent {agent_id!r} produced non-finite reward {reward}")
                self.bus.publish(REWARD_REPORT, agent_id, RewardReport(agent_id, reward))
                self.bus.publish(DONE_REPORT, agent_id, DoneReport(agent_id, done))
        return (
            dict(self.broker.observations),
            dict(self.broker.rewards),
            dict(self.broker.dones),
        )
