"""Compression-expansion RL on a toy reasoning task.

Group-relative policy optimization with decoupled clipping, a length-capping
reward and oscillating rollout-length schedules, plus the analysis metrics
used to compare runs.
"""

from . import env, metrics, policy, rlcore, schedule, trainer
from .schedule import ScheduleKind, ScheduleSpec, cap_at, dump_curve
from .trainer import TrainConfig, evaluate, load_checkpoint, save_checkpoint, toy_config, train

__version__ = "0.1.0"

__all__ = [
    "env",
    "metrics",
    "policy",
    "rlcore",
    "schedule",
    "trainer",
    "ScheduleKind",
    "ScheduleSpec",
    "cap_at",
    "dump_curve",
    "TrainConfig",
    "evaluate",
    "load_checkpoint",
    "save_checkpoint",
    "toy_config",
    "train",
]
