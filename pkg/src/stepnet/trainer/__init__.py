"""Built-in parallel DQN trainer: replay, networks, workers, checkpoints."""

from .checkpoint import (
    FORMAT_VERSION,
    PolicyCheckpoint,
    load_checkpoint,
    require_spaces,
    save_checkpoint,
)
from .dqn import (
    ActionMapper,
    DqnLearner,
    TrainerConfig,
    act,
    derive_seed,
    discretise_action,
    epsilon_at,
)
from .loop import LogRow, TrainResult, evaluate, evaluate_policy, fit, resolve_trainer_config
from .network import Mlp, MomentumSgd, td_loss_and_grads
from .replay import Batch, ReplayBuffer, Transition
from .workers import CollectResult, EpisodeStats, RolloutWorker, WorkerPool, collect

__all__ = [
    "ActionMapper",
    "Batch",
    "CollectResult",
    "DqnLearner",
    "EpisodeStats",
    "FORMAT_VERSION",
    "LogRow",
    "Mlp",
    "MomentumSgd",
    "PolicyCheckpoint",
    "ReplayBuffer",
    "RolloutWorker",
    "TrainResult",
    "TrainerConfig",
    "Transition",
    "WorkerPool",
    "act",
    "collect",
    "derive_seed",
    "discretise_action",
    "epsilon_at",
    "evaluate",
    "evaluate_policy",
    "fit",
    "load_checkpoint",
    "require_spaces",
    "resolve_trainer_config",
    "save_checkpoint",
    "td_loss_and_grads",
]
