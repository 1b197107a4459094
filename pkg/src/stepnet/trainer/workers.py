"""Rollout workers: each owns one environment and streams transitions.

Workers share nothing. A worker's trajectory depends only on its id, the
root seed and the policy snapshots it has received, so runs are
reproducible per worker regardless of how many workers execute at once.
Cross-process traffic uses one bounded queue (worker -> trainer, producers
block when it is full) and one pipe per worker (trainer -> worker policy
and stop messages).
"""

from __future__ import annotations

import multiprocessing as mp
import queue as queue_mod
import time
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from ..env import Environment
from ..errors import StepnetError
from .dqn import ActionMapper, act, derive_seed
from .network import Mlp
from .replay import Transition

# consecutive reset failures treated as a broken config, not a flaky episode
MAX_RESET_FAULTS = 5


@dataclass(frozen=True)
class EpisodeStats:
    """Outcome of one finished episode."""

    seed: int
    reward: float
    length: int
    metrics: dict[str, float] = field(default_factory=dict)
    params: dict[str, float] = field(default_factory=dict)
    series: Optional[list[tuple]] = None  # per-flow time series, evaluation only


class RolloutWorker:
    """Drives one environment with an epsilon-greedy policy.

    Actions chosen at one step boundary are paired with the reward and
    observation the same agent reports at its next boundary; pairs left
    unresolved when an episode ends are dropped.
    """

    def __init__(
        self,
        worker_id: int,
        env_config: Any,
        root_seed: int,
        net: Mlp,
        grid: int,
        epsilon: float = 1.0,
        env: Optional[Environment] = None,
        record_series: bool = False,
    ):
        self.worker_id = worker_id
        self.root_seed = root_seed
        self.record_series = record_series
        self.env = env if env is not None else Environment(env_config)
        self.mapper = ActionMapper(self.env.action_space, grid)
        if net.out_dim != self.mapper.n_actions:
            raise ValueError(
                f"network has {net.out_dim} outputs, scenario needs {self.mapper.n_actions}"
            )
        self.net = net
        self.epsilon = epsilon
        self._rng = np.random.default_rng(derive_seed(root_seed, f"worker:{worker_id}"))
        self.episode_index = 0
        self.faults = 0
        self.finished: list[EpisodeStats] = []
        self._in_episode = False
        self._episode_seed = 0
        self._last_obs: dict[str, tuple[float, ...]] = {}
        self._chosen: dict[str, tuple[tuple[float, ...], int]] = {}
        self._ep_reward = 0.0
        self._ep_len = 0
        self._reset_faults = 0

    def set_policy(
        self, params: Optional[Sequence[np.ndarray]], epsilon: Optional[float]
    ) -> None:
        if params is not None:
            self.net.set_parameters(params)
        if epsilon is not None:
            self.epsilon = epsilon

    def _begin_episode(self) -> None:
        seed = derive_seed(
            self.root_seed, f"worker:{self.worker_id}:episode:{self.episode_index}"
        )
        self.episode_index += 1
        obs = self.env.reset(seed=seed)
        self._episode_seed = seed
        self._last_obs = dict(obs)
        self._chosen.clear()
        self._in_episode = True
        self._ep_reward = 0.0
        self._ep_len = 0

    def _finish_episode(self) -> None:
        scenario = self.env.scenario
        series = None
        if self.record_series and hasattr(scenario, "flow_series"):
            series = scenario.flow_series()
        self.finished.append(
            EpisodeStats(
                seed=self._episode_seed,
                reward=self._ep_reward,
                length=self._ep_len,
                metrics=scenario.metrics(),
                params=scenario.params_used(),
                series=series,
            )
        )
        self._in_episode = False

    def collect(self, budget: int) -> list[Transition]:
        """Advance until `budget` transitions have been produced."""
        out: list[Transition] = []
        while len(out) < budget:
            if not self._in_episode:
                try:
                    self._begin_episode()
                except StepnetError:
                    self.faults += 1
                    self._reset_faults += 1
                    if self._reset_faults >= MAX_RESET_FAULTS:
                        raise
                    continue
                self._reset_faults = 0
            actions: dict[str, Any] = {}
            for agent_id in self.env.agents:
                obs = self._last_obs[agent_id]
                index = act(self.net, obs, self.epsilon, self._rng)
                self._chosen[agent_id] = (obs, index)
                actions[agent_id] = self.mapper.to_env(index)
            try:
                result = self.env.step(actions)
            except StepnetError:
                self.faults += 1
                self._in_episode = False
                continue
            for agent_id, next_obs in result.observations.items():
                pending = self._chosen.pop(agent_id, None)
                if pending is None:
                    continue  # agent just became due; nothing to pair yet
                obs, index = pending
                reward = result.rewards[agent_id]
                done = bool(result.dones[agent_id])
                out.append(
                    Transition(obs, index, reward, tuple(next_obs), done, agent_id)
                )
                self._ep_reward += reward
                self._ep_len += 1
            self._last_obs.update(result.observations)
            for agent_id, done in result.dones.items():
                if done:
                    self._last_obs.pop(agent_id, None)
                    self._chosen.pop(agent_id, None)
            if result.episode_done:
                self._finish_episode()
        return out

    def run_episode(self, chunk: int = 512) -> EpisodeStats:
        """Play one episode to completion, discarding the transitions."""
        target = len(self.finished) + 1
        while len(self.finished) < target:
            self.collect(chunk)
        return self.finished[-1]

    def close(self) -> None:
        self.env.close()


def _worker_main(conn, out_queue, worker_id, env_config, root_seed, net_spec, params,
                 epsilon, grid, chunk):
    net = Mlp(*net_spec)
    net.set_parameters(params)
    worker = RolloutWorker(worker_id, env_config, root_seed, net, grid, epsilon)
    try:
        while True:
            stop = False
            while conn.poll():
                message = conn.recv()
                if message[0] == "stop":
                    stop = True
                elif message[0] == "policy":
                    worker.set_policy(message[1], message[2])
            if stop:
                break
            try:
                transitions = worker.collect(chunk)
            except StepnetError as exc:
                out_queue.put(("fault", worker_id, repr(exc)))
                return
            episodes = worker.finished
            worker.finished = []
            out_queue.put(("batch", worker_id, transitions, episodes, worker.faults))
    except (EOFError, KeyboardInterrupt):
        pass
    finally:
        conn.close()


class WorkerPool:
    """Fans rollout collection out to N forked processes."""

    def __init__(
        self,
        env_config: Any,
        n_workers: int,
        root_seed: int,
        net: Mlp,
        grid: int,
        epsilon: float,
        chunk: int = 32,
        queue_depth: int = 4,
    ):
        if n_workers < 1:
            raise ValueError(f"need at least one worker, got {n_workers}")
        self.n_workers = n_workers
        self._ctx = mp.get_context("fork")
        self.queue = self._ctx.Queue(maxsize=max(2, queue_depth) * n_workers)
        self.pipes = []
        self.procs = []
        self.worker_faults = [0] * n_workers
        net_spec = (net.in_dim, net.out_dim, net.hidden)
        params = net.copy_parameters()
        for worker_id in range(n_workers):
            parent, child = self._ctx.Pipe()
            proc = self._ctx.Process(
                target=_worker_main,
                args=(child, self.queue, worker_id, env_config, root_seed,
                      net_spec, params, epsilon, grid, chunk),
                daemon=True,
            )
            proc.start()
            child.close()
            self.pipes.append(parent)
            self.procs.append(proc)

    def get(self, timeout: Optional[float] = None):
        """Next worker message: ("batch", id, transitions, episodes, faults)."""
        message = self.queue.get(timeout=timeout)
        if message[0] == "fault":
            _, worker_id, detail = message
            raise StepnetError(f"worker {worker_id} gave up: {detail}")
        self.worker_faults[message[1]] = message[4]
        return message

    def broadcast_policy(
        self, params: Optional[Sequence[np.ndarray]], epsilon: Optional[float]
    ) -> None:
        for pipe in self.pipes:
            try:
                pipe.send(("policy", params, epsilon))
            except (BrokenPipeError, OSError):
                pass

    @property
    def faults(self) -> int:
        return sum(self.worker_faults)

    def stop(self) -> None:
        for pipe in self.pipes:
            try:
                pipe.send(("stop",))
            except (BrokenPipeError, OSError):
                pass
        # drain so producers blocked on a full queue can see the stop message
        deadline = time.monotonic() + 10.0
        while any(p.is_alive() for p in self.procs) and time.monotonic() < deadline:
            try:
                self.queue.get(timeout=0.05)
            except queue_mod.Empty:
                pass
        for proc in self.procs:
            proc.join(timeout=1.0)
            if proc.is_alive():
                proc.terminate()
                proc.join(timeout=1.0)
        self.queue.close()
        self.queue.join_thread()
        for pipe in self.pipes:
            pipe.close()


@dataclass
class CollectResult:
    per_worker: dict[int, list[Transition]]
    episodes: list[EpisodeStats]
    total: int
    faults: int
    wall_ms: float

    @property
    def steps_per_sec(self) -> float:
        return self.total / (self.wall_ms / 1000.0) if self.wall_ms > 0 else 0.0


def collect(
    env_config: Any,
    budget: int,
    workers: int = 1,
    seed: int = 0,
    net: Optional[Mlp] = None,
    epsilon: float = 1.0,
    grid: int = 11,
    chunk: int = 64,
) -> CollectResult:
    """Gather exactly `budget` transitions under a frozen policy."""
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    if net is None:
        probe = Environment(env_config)
        mapper = ActionMapper(probe.action_space, grid)
        rng = np.random.default_rng(derive_seed(seed, "net-init"))
        net = Mlp(probe.observation_space.size, mapper.n_actions, rng=rng)
        probe.close()
    per_worker: dict[int, list[Transition]] = {w: [] for w in range(workers)}
    episodes: list[EpisodeStats] = []
    start = time.perf_counter()
    if workers == 1:
        worker = RolloutWorker(0, env_config, seed, net, grid, epsilon)
        per_worker[0] = worker.collect(budget)
        episodes = worker.finished
        faults = worker.faults
        worker.close()
        total = budget
    else:
        pool = WorkerPool(env_config, workers, seed, net, grid, epsilon, chunk=chunk)
        total = 0
        try:
            while total < budget:
                _, worker_id, transitions, finished, _ = pool.get(timeout=120.0)
                take = min(len(transitions), budget - total)
                per_worker[worker_id].extend(transitions[:take])
                episodes.extend(finished)
                total += take
        finally:
            pool.stop()
        faults = pool.faults
    wall_ms = (time.perf_counter() - start) * 1000.0
    return CollectResult(per_worker, episodes, total, faults, wall_ms)
