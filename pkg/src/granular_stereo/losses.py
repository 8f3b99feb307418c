"""Training losses: smooth-L1 on the initial disparity plus a weighted L1 sequence loss."""

import logging
from typing import Sequence, Union

import torch
import torch.nn.functional as F

from granular_stereo.config.model import LossConfig
from granular_stereo.errors import EmptyMask, NonFinite, ShapeMismatch

logger = logging.getLogger(__name__)

Scalar = Union[torch.Tensor, float]


def _masked_pair(pred: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    if pred.shape != gt.shape or mask.shape != gt.shape:
        raise ShapeMismatch(
            f"Prediction {tuple(pred.shape)}, ground truth {tuple(gt.shape)} and "
            f"mask {tuple(mask.shape)} must share one shape"
        )
    mask = mask.bool()
    if not mask.any():
        raise EmptyMask("Loss mask selects no pixels")
    return pred[mask], gt[mask]


def loss_init(d0: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor, beta: float = 1.0) -> torch.Tensor:
    """Smooth-L1 on the initial disparity, averaged over masked pixels.

    Per pixel: e²/(2β) if |e| < β, else |e| − β/2.

    Raises:
        EmptyMask: If the mask is all false.
        ShapeMismatch: If the inputs are not aligned.
    """
    pred, target = _masked_pair(d0, gt, mask)
    return F.smooth_l1_loss(pred, target, beta=beta, reduction="mean")


def iteration_weights(count: int, gamma: float) -> list[float]:
    """Weights γ^(N−n) for n = 1..N; the last one is exactly 1."""
    return [gamma ** (count - n) for n in range(1, count + 1)]


def loss_iter(
    predictions: Sequence[torch.Tensor], gt: torch.Tensor, mask: torch.Tensor, gamma: float = 0.9
) -> torch.Tensor:
    """Exponentially weighted sum of per-iteration masked mean L1 errors.

    Args:
        predictions: d_1..d_N, each aligned with gt.
        gt: Ground-truth disparity.
        mask: Boolean validity mask.
        gamma: Decay toward earlier iterations.

    Raises:
        EmptyMask: If the mask is all false.
        ValueError: If predictions is empty.
    """
    if not predictions:
        raise ValueError("loss_iter needs at least one prediction")
    total = predictions[0].new_zeros(())
    for weight, prediction in zip(iteration_weights(len(predictions), gamma), predictions):
        pred, target = _masked_pair(prediction, gt, mask)
        total = total + weight * (pred - target).abs().mean()
    return total


def loss_total(init: Scalar, iterative: Scalar) -> Scalar:
    """L_init + L_iter.

    Raises:
        NonFinite: If either term is NaN or infinite.
    """
    for name, value in (("init", init), ("iter", iterative)):
        value = value.detach() if isinstance(value, torch.Tensor) else torch.as_tensor(value)
        if not torch.isfinite(value).all():
            raise NonFinite(f"Loss term '{name}' is not finite: {value.item()}")
    return init + iterative


def sequence_loss(
    init_upsampled: torch.Tensor,
    predictions: Sequence[torch.Tensor],
    gt: torch.Tensor,
    mask: torch.Tensor,
    config: LossConfig,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Total training loss for one batch at full resolution.

    Args:
        init_upsampled: d0 resized to full resolution (B, 1, H, W).
        predictions: Full-resolution d_1..d_N.
        gt: Ground truth (B, 1, H, W).
        mask: Validity mask (B, 1, H, W).
        config: Loss weights.

    Returns:
        Tuple of (total loss tensor, dict with the float value of each term).
    """
    init = loss_init(init_upsampled, gt, mask, config.smooth_l1_beta)
    iterative = loss_iter(predictions, gt, mask, config.gamma)
    total = loss_total(init, iterative)
    parts = {"init": float(init.detach()), "iter": float(iterative.detach()), "total": float(total.detach())}
    logger.debug(f"Loss terms: {parts}")
    return total, parts
