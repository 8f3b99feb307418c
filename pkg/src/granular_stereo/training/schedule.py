"""One-cycle learning-rate schedule: linear warm-up, cosine decay to zero."""

import logging
import math

import torch

from granular_stereo.errors import StepOutOfRange

logger = logging.getLogger(__name__)


def one_cycle_lr(step: int, total_steps: int, peak: float, warmup_fraction: float) -> float:
    """Learning rate at ``step``.

    Ramps linearly from 0 to ``peak`` over the first ``warmup_fraction·total_steps``
    steps, then follows a half cosine from ``peak`` down to 0 at ``total_steps``.

    Raises:
        StepOutOfRange: If step lies outside [0, total_steps].
    """
    if not 0 <= step <= total_steps:
        raise StepOutOfRange(f"Step {step} is outside [0, {total_steps}]")
    warmup = warmup_fraction * total_steps
    if step < warmup:
        return peak * step / warmup
    decay = total_steps - warmup
    if decay <= 0:
        return peak
    progress = (step - warmup) / decay
    return 0.5 * peak * (1.0 + math.cos(math.pi * progress))


def apply_learning_rate(optimizer: torch.optim.Optimizer, lr: float) -> None:
    for group in optimizer.param_groups:
        group["lr"] = lr
