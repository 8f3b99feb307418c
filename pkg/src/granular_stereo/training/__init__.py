"""Optimization loop, schedule, checkpoints and ablation variants."""

from granular_stereo.training.ablation import PRIMARY_FLAGS, apply_ablation, disabled_flags, resolve_flag
from granular_stereo.training.checkpoint import (
    FORMAT_VERSION,
    CheckpointContainer,
    load_checkpoint,
    read_container,
    save_checkpoint,
)
from granular_stereo.training.schedule import apply_learning_rate, one_cycle_lr
from granular_stereo.training.trainer import TrainResult, read_log, train

__all__ = [
    "FORMAT_VERSION",
    "PRIMARY_FLAGS",
    "CheckpointContainer",
    "TrainResult",
    "apply_ablation",
    "apply_learning_rate",
    "disabled_flags",
    "load_checkpoint",
    "one_cycle_lr",
    "read_container",
    "read_log",
    "resolve_flag",
    "save_checkpoint",
    "train",
]
