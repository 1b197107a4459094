"""Packet-level network simulation with a native step-based RL interface.

The public surface re-exported here is what external consumers (including
the separate bindings package) are expected to use: the environment and its
space descriptors, configuration loading, the trainer entry points and the
error hierarchy.
"""

from . import errors
from .config import config_hash, load_config, parse_config
from .env import Box, Discrete, Environment, StepResult
from .trainer import collect, evaluate, fit

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Discrete",
    "Environment",
    "StepResult",
    "collect",
    "config_hash",
    "errors",
    "evaluate",
    "fit",
    "load_config",
    "parse_config",
    "__version__",
]
