"""Training and evaluation loops tying rollout workers to the learner."""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Optional

from ..config import EnvConfig, config_hash, parse_config
from ..env import Environment
from .checkpoint import PolicyCheckpoint, require_spaces
from .dqn import ActionMapper, DqnLearner, TrainerConfig, epsilon_at
from .network import Mlp
from .workers import EpisodeStats, RolloutWorker, WorkerPool, derive_seed


@dataclass(frozen=True)
class LogRow:
    wall_ms: float
    steps: int
    episodes: int
    mean_ep_reward: float
    mean_ep_len: float
    loss: float
    epsilon: float


@dataclass
class TrainResult:
    checkpoint: PolicyCheckpoint
    log: list[LogRow]
    episodes: list[EpisodeStats]
    faults: int
    wall_ms: float


def resolve_trainer_config(env_cfg: EnvConfig, **overrides) -> TrainerConfig:
    """Trainer section of the config document, with CLI-style overrides."""
    section = dict(env_cfg.raw.get("trainer", {}) or {})
    section.setdefault("seed", env_cfg.seed)
    for key, value in overrides.items():
        if value is not None:
            section[key] = value
    return TrainerConfig.parse(section)


def fit(
    env_config: Any,
    trainer_cfg: Optional[TrainerConfig] = None,
    resume: Optional[PolicyCheckpoint] = None,
    progress: Optional[Callable[[LogRow], None]] = None,
    chunk: int = 32,
) -> TrainResult:
    """Run collection and learning until the configured step budget.

    With one worker, collection runs inline on the learner's own network
    (always-fresh policy); with more, forked workers act on parameter
    snapshots broadcast every `param_sync` trainer steps.
    """
    env_cfg = parse_config(env_config)
    cfg = trainer_cfg if trainer_cfg is not None else resolve_trainer_config(env_cfg)

    probe = Environment(env_cfg)
    obs_space = probe.observation_space
    action_space = probe.action_space
    mapper = ActionMapper(action_space, cfg.action_grid)
    probe.close()

    learner = DqnLearner(obs_space.size, mapper.n_actions, cfg)
    if resume is not None:
        require_spaces(resume, obs_space, action_space)
        learner.online.set_parameters(resume.parameters)
        learner.target.set_parameters(resume.parameters)
        learner.train_steps = resume.train_steps
        learner.env_steps = resume.env_steps

    start = time.perf_counter()
    log: list[LogRow] = []
    episodes: list[EpisodeStats] = []
    recent: deque[EpisodeStats] = deque(maxlen=100)
    last_loss = float("nan")
    faults = 0
    next_log_at = learner.env_steps + cfg.log_interval

    def train_to_target() -> None:
        nonlocal last_loss
        if not learner.ready():
            return
        target = (learner.env_steps - cfg.warmup_steps) // cfg.train_freq
        while learner.train_steps < target:
            last_loss = learner.train_step()

    def note_episodes(finished: list[EpisodeStats]) -> None:
        episodes.extend(finished)
        recent.extend(finished)

    def maybe_log(epsilon: float) -> None:
        nonlocal next_log_at
        if learner.env_steps < next_log_at:
            return
        next_log_at = learner.env_steps + cfg.log_interval
        _emit(epsilon)

    def _emit(epsilon: float) -> None:
        row = LogRow(
            wall_ms=(time.perf_counter() - start) * 1000.0,
            steps=learner.env_steps,
            episodes=len(episodes),
            mean_ep_reward=(
                sum(e.reward for e in recent) / len(recent) if recent else float("nan")
            ),
            mean_ep_len=(
                sum(e.length for e in recent) / len(recent) if recent else float("nan")
            ),
            loss=last_loss,
            epsilon=epsilon,
        )
        log.append(row)
        if progress is not None:
            progress(row)

    budget = cfg.total_steps
    if cfg.workers == 1:
        epsilon = epsilon_at(learner.env_steps, cfg)
        worker = RolloutWorker(
            0, env_cfg, cfg.seed, learner.online, cfg.action_grid, epsilon
        )
        try:
            while learner.env_steps < budget:
                epsilon = epsilon_at(learner.env_steps, cfg)
                worker.set_policy(None, epsilon)
                take = min(cfg.train_freq, budget - learner.env_steps)
                transitions = worker.collect(take)
                learner.buffer.extend(transitions)
                learner.env_steps += len(transitions)
                note_episodes(worker.finished)
                worker.finished = []
                train_to_target()
                maybe_log(epsilon)
            faults = worker.faults
        finally:
            worker.close()
    else:
        epsilon = epsilon_at(learner.env_steps, cfg)
        pool = WorkerPool(
            env_cfg.raw or env_cfg,
            cfg.workers,
            cfg.seed,
            learner.online,
            cfg.action_grid,
            epsilon,
            chunk=chunk,
        )
        last_sync_bucket = learner.train_steps // cfg.param_sync
        last_epsilon = epsilon
        try:
            while learner.env_steps < budget:
                _, _, transitions, finished, _ = pool.get(timeout=300.0)
                take = min(len(transitions), budget - learner.env_steps)
                learner.buffer.extend(transitions[:take])
                learner.env_steps += take
                note_episodes(finished)
                train_to_target()
                epsilon = epsilon_at(learner.env_steps, cfg)
                bucket = learner.train_steps // cfg.param_sync
                if bucket != last_sync_bucket:
                    pool.broadcast_policy(learner.online.copy_parameters(), epsilon)
                    last_sync_bucket = bucket
                    last_epsilon = epsilon
                elif abs(epsilon - last_epsilon) >= 0.01:
                    pool.broadcast_policy(None, epsilon)
                    last_epsilon = epsilon
                maybe_log(epsilon)
            faults = pool.faults
        finally:
            pool.stop()

    if not log or log[-1].steps != learner.env_steps:
        _emit(epsilon_at(learner.env_steps, cfg))
    wall_ms = (time.perf_counter() - start) * 1000.0
    ckpt = PolicyCheckpoint(
        observation_space=obs_space.describe(),
        action_space=action_space.describe(),
        action_grid=cfg.action_grid,
        hidden=cfg.hidden,
        parameters=learner.online.copy_parameters(),
        trainer_config=cfg.describe(),
        config_hash=config_hash(env_cfg.raw),
        train_steps=learner.train_steps,
        env_steps=learner.env_steps,
    )
    return TrainResult(ckpt, log, episodes, faults, wall_ms)


def evaluate_policy(
    env_config: Any,
    net: Mlp,
    grid: int,
    episodes: int,
    seed: int = 0,
    record_series: bool = False,
) -> list[EpisodeStats]:
    """Greedy (epsilon = 0) episodes; per-episode reward, length and metrics."""
    if episodes < 0:
        raise ValueError(f"episodes must be >= 0, got {episodes}")
    if episodes == 0:
        return []
    worker = RolloutWorker(
        0, env_config, derive_seed(seed, "eval"), net, grid, 0.0,
        record_series=record_series,
    )
    try:
        return [worker.run_episode() for _ in range(episodes)]
    finally:
        worker.close()


def evaluate(
    env_config: Any,
    ckpt: PolicyCheckpoint,
    episodes: int,
    seed: int = 0,
    record_series: bool = False,
) -> list[EpisodeStats]:
    """Evaluate a checkpointed policy after verifying space compatibility."""
    probe = Environment(env_config)
    require_spaces(ckpt, probe.observation_space, probe.action_space)
    probe.close()
    net = ckpt.build_network()
    return evaluate_policy(
        env_config, net, ckpt.action_grid, episodes, seed, record_series=record_series
    )
