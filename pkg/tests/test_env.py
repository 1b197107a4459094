"""Stepping choreography: due-agent bookkeeping, report collection, episode end."""

from __future__ import annotations

import math

import pytest

from stepnet.env import Box, Discrete, Environment, RlAgent, Scenario
from stepnet.errors import (
    ClosedEnvironment,
    DuplicateAgent,
    EnvironmentFault,
    EpisodeOver,
    InvalidAction,
    MissingAction,
    ScenarioError,
    UnknownAgent,
    ZeroDuration,
)
from stepnet.kernel import STEP

BASE_CONFIG = {"scenario": "cartpole", "seed": 1, "max_steps": 400}


class ScriptedAgent(RlAgent):
    """Steps on a fixed cadence, observes its own counters."""

    def __init__(self, env, agent_id, period_ns, lifetime=None, die_after=None):
        self.env = env
        self.agent_id = agent_id
        self.period_ns = period_ns
        self.lifetime = lifetime
        self.die_after = die_after  # stop requesting steps, simulating a dead source
        self.actions: list = []
        self.steps_taken = 0

    def start(self, event) -> None:
        self.env.register_agent(self.agent_id, self)
        self.env.set_next_step(self.agent_id, self.period_ns)

    def set_action(self, action) -> None:
        self.actions.append(action)
        self.steps_taken += 1
        if self.die_after is not None and self.steps_taken >= self.die_after:
            return
        self.env.set_next_step(self.agent_id, self.period_ns)

    def get_obs(self):
        return (float(self.steps_taken), float(len(self.actions)))

    def get_reward(self):
        return float(self.steps_taken)

    def get_done(self):
        return self.lifetime is not None and self.steps_taken >= self.lifetime


class FakeScenario(Scenario):
    observation_space = Box((-math.inf, -math.inf), (math.inf, math.inf))
    action_space = Discrete(4)

    def __init__(self, config, agent_specs):
        self.config = config
        self.agent_specs = agent_specs
        self.agents: dict[str, ScriptedAgent] = {}
        self.seen_kinds: list[str] = []

    def build(self, env) -> None:
        for spec in self.agent_specs:
            agent = ScriptedAgent(env, **spec)
            self.agents[agent.agent_id] = agent

            def handler(event, agent=agent):
                self.seen_kinds.append(event.kind)
                agent.start(event)

            env.kernel.register_component(agent.agent_id, handler)
            env.kernel.schedule(0, agent.agent_id, "BOOT")


def make_env(agent_specs, config=None, **kwargs):
    return Environment(
        config or BASE_CONFIG,
        scenario_factory=lambda cfg: FakeScenario(cfg, agent_specs),
        **kwargs,
    )


def test_reset_returns_initial_observations_without_rewards():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    obs = env.reset()
    assert set(obs) == {"a"}
    assert obs["a"] == (0.0, 0.0)
    assert env.agents == ("a",)
    assert env.now == 10


def test_step_before_reset_is_rejected():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    with pytest.raises(EpisodeOver):
        env.step({"a": 0})


def test_result_maps_share_one_key_set():
    env = make_env([{"agent_id": "a", "period_ns": 10}, {"agent_id": "b", "period_ns": 10}])
    env.reset()
    result = env.step({"a": 1, "b": 2})
    assert set(result.observations) == set(result.rewards) == set(result.dones) == {"a", "b"}


def test_actions_reach_only_their_agent():
    env = make_env([{"agent_id": "a", "period_ns": 10}, {"agent_id": "b", "period_ns": 10}])
    env.reset()
    env.step({"a": 1, "b": 2})
    env.step({"a": 3, "b": 0})
    scenario = env.scenario
    assert scenario.agents["a"].actions == [1, 3]
    assert scenario.agents["b"].actions == [2, 0]


def test_agents_on_different_cadences_step_in_interleaved_groups():
    env = make_env([{"agent_id": "fast", "period_ns": 10}, {"agent_id": "slow", "period_ns": 25}])
    env.reset()  # only "fast" is due at t=10
    assert env.agents == ("fast",)
    groups = [env.agents]
    for _ in range(5):
        result = env.step({a: 0 for a in env.agents})
        groups.append(tuple(sorted(result.observations)))
    # boundaries: 10(fast) 20(fast) 25(slow) 30(fast) 40(fast) 50(both, coalesced)
    assert groups == [
        ("fast",),
        ("fast",),
        ("slow",),
        ("fast",),
        ("fast",),
        ("fast", "slow"),
    ]


def test_simultaneous_requests_coalesce_into_one_step_event():
    events = []
    env = make_env(
        [{"agent_id": "a", "period_ns": 10}, {"agent_id": "b", "period_ns": 10}],
        event_sink=lambda e: events.append((e.timestamp, e.kind)),
    )
    env.reset()
    env.step({"a": 0, "b": 0})
    assert all(kind != STEP for _, kind in events), "step boundaries must not dispatch"


def test_missing_action_for_due_agent_is_an_error():
    env = make_env([{"agent_id": "a", "period_ns": 10}, {"agent_id": "b", "period_ns": 10}])
    env.reset()
    with pytest.raises(MissingAction):
        env.step({"a": 0})


def test_action_for_non_due_agent_is_an_error():
    env = make_env([{"agent_id": "fast", "period_ns": 10}, {"agent_id": "slow", "period_ns": 25}])
    env.reset()
    with pytest.raises(UnknownAgent) as info:
        env.step({"fast": 0, "slow": 0})
    assert "not due" in str(info.value)


def test_action_for_unregistered_agent_is_an_error():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    env.reset()
    with pytest.raises(UnknownAgent) as info:
        env.step({"a": 0, "ghost": 0})
    assert "not registered" in str(info.value)


def test_action_outside_space_is_rejected():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    env.reset()
    with pytest.raises(InvalidAction):
        env.step({"a": 99})
    with pytest.raises(InvalidAction):
        env.step({"a": 1.5})


def test_done_agent_leaves_and_its_actions_are_rejected():
    env = make_env([{"agent_id": "a", "period_ns": 10, "lifetime": 2}, {"agent_id": "b", "period_ns": 10}])
    env.reset()
    first = env.step({"a": 0, "b": 0})
    assert first.dones == {"a": False, "b": False}
    second = env.step({"a": 0, "b": 0})
    assert second.dones["a"] is True
    assert second.episode_done is False
    assert env.agents == ("b",)
    with pytest.raises(UnknownAgent):
        env.step({"a": 0, "b": 0})
    third = env.step({"b": 0})
    assert set(third.observations) == {"b"}


def test_episode_done_when_every_agent_is_done():
    env = make_env([{"agent_id": "a", "period_ns": 10, "lifetime": 3}])
    env.reset()
    results = [env.step({"a": 0}) for _ in range(3)]
    assert [r.episode_done for r in results] == [False, False, True]
    assert results[-1].dones["a"] is True
    with pytest.raises(EpisodeOver):
        env.step({"a": 0})


def test_step_cap_closes_episode_with_agents_alive():
    config = dict(BASE_CONFIG, max_steps=4)
    env = make_env([{"agent_id": "a", "period_ns": 10}], config=config)
    env.reset()
    results = [env.step({"a": 0}) for _ in range(4)]
    assert [r.episode_done for r in results] == [False, False, False, True]
    assert results[-1].dones["a"] is False  # cap cut it off, the agent itself is fine


def test_event_exhaustion_ends_episode_with_final_reports():
    # The agent stops requesting boundaries, so the queue drains mid-episode.
    env = make_env([{"agent_id": "a", "period_ns": 10, "die_after": 2}])
    env.reset()
    first = env.step({"a": 0})
    assert first.episode_done is False
    second = env.step({"a": 0})
    assert second.episode_done is True
    assert set(second.observations) == {"a"}


def test_scenario_with_no_step_event_fails_reset():
    class Inert(Scenario):
        observation_space = Box((0.0,), (1.0,))
        action_space = Discrete(2)

        def build(self, env):
            pass

    env = Environment(BASE_CONFIG, scenario_factory=lambda cfg: Inert())
    with pytest.raises(ScenarioError):
        env.reset()


def test_reset_reproduces_and_reseeds():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    obs_a = env.reset()
    env.step({"a": 1})
    obs_b = env.reset()
    assert obs_a == obs_b  # same seed, rebuilt from scratch
    env2 = make_env([{"agent_id": "a", "period_ns": 10}])
    assert env2.reset(seed=77) == obs_a  # fake scenario ignores randomness


def test_duplicate_agent_id_is_rejected():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    env.reset()
    with pytest.raises(DuplicateAgent):
        env.register_agent("a", env.scenario.agents["a"])


def test_zero_duration_step_request_is_rejected():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    env.reset()
    with pytest.raises(ZeroDuration):
        env.set_next_step("a", 0)
    with pytest.raises(UnknownAgent):
        env.set_next_step("ghost", 10)


def test_last_step_request_wins():
    class Rescheduler(ScriptedAgent):
        def set_action(self, action):
            self.actions.append(action)
            self.steps_taken += 1
            self.env.set_next_step(self.agent_id, 1000)
            self.env.set_next_step(self.agent_id, self.period_ns)  # replaces the first

    def factory(cfg):
        scenario = FakeScenario(cfg, [])
        def build(env, scenario=scenario):
            agent = Rescheduler(env, "a", 10)
            scenario.agents["a"] = agent
            env.kernel.register_component("a", agent.start)
            env.kernel.schedule(0, "a", "BOOT")
        scenario.build = build
        return scenario

    env = Environment(BASE_CONFIG, scenario_factory=factory)
    env.reset()
    env.step({"a": 0})
    assert env.now == 20  # 10 + 10, not 10 + 1000


def test_agent_callback_failure_becomes_environment_fault():
    class Broken(ScriptedAgent):
        def get_reward(self):
            raise ValueError("sensor exploded")

    def factory(cfg):
        scenario = FakeScenario(cfg, [])
        def build(env):
            agent = Broken(env, "a", 10)
            scenario.agents["a"] = agent
            env.kernel.register_component("a", agent.start)
            env.kernel.schedule(0, "a", "BOOT")
        scenario.build = build
        return scenario

    env = Environment(BASE_CONFIG, scenario_factory=factory)
    env.reset()
    with pytest.raises(EnvironmentFault):
        env.step({"a": 0})
    with pytest.raises(EpisodeOver):
        env.step({"a": 0})


def test_wrong_observation_length_is_a_fault():
    class Misshapen(ScriptedAgent):
        def get_obs(self):
            return (1.0, 2.0, 3.0)

    def factory(cfg):
        scenario = FakeScenario(cfg, [])
        def build(env):
            agent = Misshapen(env, "a", 10)
            scenario.agents["a"] = agent
            env.kernel.register_component("a", agent.start)
            env.kernel.schedule(0, "a", "BOOT")
        scenario.build = build
        return scenario

    env = Environment(BASE_CONFIG, scenario_factory=factory)
    with pytest.raises(EnvironmentFault):
        env.reset()


def test_non_finite_observation_is_a_fault():
    class Nan(ScriptedAgent):
        def get_obs(self):
            return (math.nan, 0.0)

    def factory(cfg):
        scenario = FakeScenario(cfg, [])
        def build(env):
            agent = Nan(env, "a", 10)
            scenario.agents["a"] = agent
            env.kernel.register_component("a", agent.start)
            env.kernel.schedule(0, "a", "BOOT")
        scenario.build = build
        return scenario

    env = Environment(BASE_CONFIG, scenario_factory=factory)
    with pytest.raises(EnvironmentFault):
        env.reset()


def test_close_makes_the_handle_unusable():
    env = make_env([{"agent_id": "a", "period_ns": 10}])
    env.reset()
    env.close()
    with pytest.raises(ClosedEnvironment):
        env.step({"a": 0})
    with pytest.raises(ClosedEnvironment):
        env.reset()


def test_dispatched_events_never_pass_a_step_boundary():
    # Every event dispatched between two step() returns must not be later
    # than the boundary the step() returned at.
    events = []
    env = make_env(
        [{"agent_id": "a", "period_ns": 10}, {"agent_id": "b", "period_ns": 35}],
        event_sink=lambda e: events.append(e.timestamp),
    )
    env.reset()
    for _ in range(6):
        before = len(events)
        env.step({agent: 0 for agent in env.agents})
        assert all(ts <= env.now for ts in events[before:])
