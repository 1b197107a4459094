"""Congestion-control agent: observation, reward and window updates per step.

Each flow hands control of its congestion window to one agent as soon as
slow start exits.  From then on the agent is stepped every couple of minimum
round-trip times; an action is an exponent alpha in [-2, 2] scaling the
window by 2**alpha, so one step can at most quadruple or quarter it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .config import EnvConfig
from .env import Box, Environment, RlAgent, Scenario
from .errors import OutOfRange, ScenarioError
from .kernel import FLOW_START
from .netsim import (
    ACK_BYTES,
    BottleneckQueue,
    DATA_BITS,
    FifoLink,
    FlowTransport,
    Receiver,
    RL_CONTROLLED,
    StepStats,
)

ALPHA_MIN = -2.0
ALPHA_MAX = 2.0

# d counts as "at the floor" when it is within a relative hair of d_min;
# an EWMA almost never lands exactly on the minimum sample.
D_EQUALITY_TOLERANCE = 1e-6


def _clamp01(value: float) -> float:
    if value < 0.0:
        return 0.0
    if value > 1.0:
        return 1.0
    return value


def compute_observation(stats: StepStats, cwnd_cap: float) -> tuple[float, float, float, float]:
    """Observation vector: throughput share, delay position, loss, window size.

    All four entries are clamped to [0, 1] so value networks never see
    transients outside the declared space.
    """
    ratio = stats.R / stats.R_max if stats.R_max > 0 else 0.0
    if stats.d_max > stats.d_min:
        delay_pos = (stats.d - stats.d_min) / (stats.d_max - stats.d_min)
    else:
        delay_pos = 0.0
    cap_log = math.log2(cwnd_cap) if cwnd_cap > 1 else 1.0
    cwnd = stats.cwnd if stats.cwnd >= 1.0 else 1.0
    window_pos = math.log2(cwnd) / cap_log
    return (
        _clamp01(ratio),
        _clamp01(delay_pos),
        _clamp01(stats.L),
        _clamp01(window_pos),
    )


def compute_reward(stats: StepStats) -> float:
    """Reward for the last step.

    Below full throughput while delay sits at its floor the reward is the
    loss-discounted throughput share alone; once delay rises above the floor
    it is scaled down by both the relative delay and the position of the
    smoothed RTT between its observed extremes.  The maximum of 1 is reached
    only at full throughput, zero loss and floor delay.
    """
    ratio = stats.R / stats.R_max if stats.R_max > 0 else 0.0
    base = ratio - stats.L
    at_floor = stats.d <= stats.d_min * (1.0 + D_EQUALITY_TOLERANCE)
    if base < 1.0 and at_floor:
        return base
    if stats.d_max > stats.d_min:
        delay_pos = (stats.d - stats.d_min) / (stats.d_max - stats.d_min)
    else:
        delay_pos = 0.0
    scale = stats.d_min / stats.d if stats.d > 0 else 1.0
    return base * scale * (1.0 - delay_pos)


class CcAgent(RlAgent):
    """Window controller for one flow, attached at slow-start handover."""

    def __init__(self, env: Environment, agent_id: str, transport: FlowTransport, config):
        self._env = env
        self.agent_id = agent_id
        self.transport = transport
        self._config = config
        self.actions_applied = 0
        self.done_reason: Optional[str] = None
        self.last_stats: Optional[StepStats] = None
        self._cache: Optional[tuple[tuple, float, bool]] = None
        transport.on_rl_handover = self._on_handover

    def _on_handover(self, now: int) -> None:
        self._env.register_agent(self.agent_id, self)
        self._request_step()

    def _request_step(self) -> None:
        now = self._env.kernel.clock
        floor = self.transport.windowed_d_min(now)
        duration = int(self._config.step_rtt_multiplier * floor)
        self._env.set_next_step(self.agent_id, duration if duration > 0 else 1)

    def apply_action(self, alpha: float) -> None:
        """Scale the congestion window by 2**alpha, clamped to [1, cap]."""
        if not ALPHA_MIN <= alpha <= ALPHA_MAX:
            raise OutOfRange(f"alpha {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
        if self.transport.phase != RL_CONTROLLED:
            raise ScenarioError("the window is not under agent control until slow start ends")
        target = (2.0**alpha) * self.transport.cwnd
        cap = self._config.cwnd_cap_pkts
        if target > cap:
            target = cap
        self.transport.set_cwnd(target)

    # -- RlAgent surface ------------------------------------------------------

    def set_action(self, action) -> None:
        alpha = float(action[0]) if isinstance(action, Sequence) else float(action)
        self._cache = None
        self.apply_action(alpha)
        self.actions_applied += 1
        self._request_step()

    def on_step_end(self) -> tuple[tuple, float, bool]:
        """Freeze statistics once per boundary; all three reports share them."""
        if self._cache is None:
            stats = self.transport.snapshot(self._env.kernel.clock)
            self.last_stats = stats
            observation = compute_observation(stats, self._config.cwnd_cap_pkts)
            reward = compute_reward(stats)
            done = self._evaluate_done(stats)
            self._cache = (observation, reward, done)
        return self._cache

    def _evaluate_done(self, stats: StepStats) -> bool:
        if stats.L >= self._config.loss_done_threshold:
            self.done_reason = "loss"
            return True
        if self.transport.complete:
            self.done_reason = "completed"
            return True
        if self.actions_applied >= self._config.max_steps:
            self.done_reason = "max_steps"
            return True
        return False

    def get_obs(self):
        return self.on_step_end()[0]

    def get_reward(self):
        return self.on_step_end()[1]

    def get_done(self):
        return self.on_step_end()[2]


@dataclass
class DumbbellScenario(Scenario):
    """Point-to-point flows sharing one drop-tail bottleneck."""

    config: EnvConfig

    def __post_init__(self):
        self.observation_space = Box((0.0, 0.0, 0.0, 0.0), (1.0, 1.0, 1.0, 1.0))
        self.action_space = Box((ALPHA_MIN,), (ALPHA_MAX,))
        self.transports: list[FlowTransport] = []
        self.receivers: list[Receiver] = []
        self.cc_agents: list[CcAgent] = []
        self.queue: Optional[BottleneckQueue] = None
        self.bandwidth_bps = 0.0
        self._params: dict[str, float] = {}
        self._first_start_ns = 0
        self._env: Optional[Environment] = None

    def build(self, env: Environment) -> None:
        self._env = env
        kernel = env.kernel
        rng = kernel.rng("params")
        net = self.config.dumbbell
        bandwidth_mbps = net.bandwidth_mbps.sample(rng)
        rtt_ms = net.rtt_ms.sample(rng)
        buffer_pkts = int(net.buffer_pkts.sample(rng))
        self._params = {
            "bandwidth_mbps": bandwidth_mbps,
            "rtt_ms": rtt_ms,
            "buffer_pkts": float(buffer_pkts),
        }
        self.bandwidth_bps = bandwidth_mbps * 1e6
        one_way_ns = round(rtt_ms * 1e6 / 2)  # ms to ns, split across both directions
        self.queue = BottleneckQueue(self.bandwidth_bps, one_way_ns, buffer_pkts)
        ack_link = FifoLink(self.bandwidth_bps, one_way_ns, ACK_BYTES)
        agent_cfg = self.config.agent
        self.transports = []
        self.receivers = []
        self.cc_agents = []
        starts = []
        for index, flow in enumerate(net.flows):
            flow_id = f"flow{index}"
            receiver = Receiver(kernel, ack_link, f"{flow_id}.snd")
            transport = FlowTransport(
                kernel,
                self.queue,
                flow_id,
                flow.size_pkts,
                agent_cfg.initial_cwnd_pkts,
                agent_cfg.ssthresh_pkts,
                data_target=f"{flow_id}.rcv",
                timer_target=f"{flow_id}.tmr",
            )
            agent = CcAgent(env, flow_id, transport, agent_cfg)
            kernel.register_component(f"{flow_id}.rcv", receiver.on_data)
            kernel.register_component(
                f"{flow_id}.snd",
                lambda event, t=transport: t.start(event) if event.kind == FLOW_START else t.on_ack(event),
            )
            kernel.register_component(f"{flow_id}.tmr", transport.on_timer)
            start_ns = round(flow.start_s * 1e9)
            starts.append(start_ns)
            kernel.schedule(start_ns, f"{flow_id}.snd", FLOW_START)
            self.transports.append(transport)
            self.receivers.append(receiver)
            self.cc_agents.append(agent)
        self._first_start_ns = min(starts)

    def is_terminal(self) -> bool:
        return all(t.size_pkts is not None and t.complete for t in self.transports)

    def metrics(self) -> dict[str, float]:
        now = self._env.kernel.clock if self._env else 0
        elapsed_ns = max(1, now - self._first_start_ns)
        total_acked = sum(t.snd_una for t in self.transports)
        throughput = total_acked * DATA_BITS * 1e9 / elapsed_ns
        offered = self.queue.accepted + self.queue.drops
        return {
            "norm_throughput": throughput / self.bandwidth_bps if self.bandwidth_bps else 0.0,
            "mean_queue_delay_ms": (
                self.queue.total_wait_ns / self.queue.accepted / 1e6 if self.queue.accepted else 0.0
            ),
            "loss_rate": self.queue.drops / offered if offered else 0.0,
        }

    def params_used(self) -> dict[str, float]:
        return dict(self._params)

    def flow_series(self) -> list[tuple]:
        rows = []
        for transport in self.transports:
            rows.extend(transport.series)
        rows.sort(key=lambda row: row[0])
        return rows
