"""Training loop.

Every step's batch composition and crop windows depend only on
(seed, step), so a run resumed from a checkpoint replays the same data as
an uninterrupted one regardless of the worker count.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset, Sampler

from granular_stereo.config.model import TrainConfig
from granular_stereo.config.validation import PAD_MULTIPLE, validate_train_config
from granular_stereo.core.padding import pad_to_multiple
from granular_stereo.core.types import StereoSample
from granular_stereo.data.dataset import collate_samples, random_crop
from granular_stereo.errors import DataIOError, NonFinite, NonFiniteLoss, ValidationError
from granular_stereo.losses import sequence_loss
from granular_stereo.training.checkpoint import load_checkpoint, save_checkpoint
from granular_stereo.training.schedule import apply_learning_rate, one_cycle_lr
from granular_stereo.utils.fs_utils import ensure_dir
from granular_stereo.utils.seeding import step_rng

logger = logging.getLogger(__name__)

# (step, slot in the batch, dataset index)
SampleKey = tuple[int, int, int]


class StepBatchSampler(Sampler[list[SampleKey]]):
    """Yields one batch of sample keys per optimizer step in (start, total]."""

    def __init__(self, dataset_size: int, batch_size: int, seed: int, start_step: int, last_step: int):
        self.dataset_size = dataset_size
        self.batch_size = batch_size
        self.seed = seed
        self.start_step = start_step
        self.last_step = last_step

    def __len__(self) -> int:
        return max(self.last_step - self.start_step, 0)

    def __iter__(self) -> Iterator[list[SampleKey]]:
        for step in range(self.start_step + 1, self.last_step + 1):
            indices = step_rng(self.seed, step).integers(0, self.dataset_size, size=self.batch_size)
            yield [(step, slot, int(index)) for slot, index in enumerate(indices)]


class CroppedView(Dataset):
    """Dataset view keyed by SampleKey that applies the step's random crop."""

    def __init__(self, dataset: Dataset, seed: int, crop: Optional[tuple[int, int]] = None):
        self.dataset = dataset
        self.seed = seed
        self.crop = crop

    def __len__(self) -> int:
        return len(self.dataset)

    def __getitem__(self, key: SampleKey) -> StereoSample:
        step, slot, index = key
        sample = self.dataset[index]
        if self.crop is None:
            return sample
        return random_crop(sample, self.crop[0], self.crop[1], [self.seed, step, slot])


def pad_batch(batch: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Pad a collated batch to a multiple of 32; padded pixels leave the mask."""
    left, record = pad_to_multiple(batch["left"], PAD_MULTIPLE)
    if record.is_identity:
        return batch
    right, _ = pad_to_multiple(batch["right"], PAD_MULTIPLE)
    disparity, _ = pad_to_multiple(batch["disparity"], PAD_MULTIPLE)
    mask = F.pad(batch["mask"].float(), (0, record.right, 0, record.bottom)) > 0.5
    return {"left": left, "right": right, "disparity": disparity, "mask": mask}


def clip_gradients(parameters: Sequence[torch.nn.Parameter], max_norm: float) -> float:
    """Clip by global norm in place; returns the norm before clipping."""
    return float(torch.nn.utils.clip_grad_norm_(parameters, max_norm))


def batch_epe(prediction: torch.Tensor, gt: torch.Tensor, mask: torch.Tensor) -> float:
    mask = mask.bool()
    return float((prediction.detach() - gt)[mask].abs().mean())


@dataclass
class TrainResult:
    """Outcome of a training run.

    Attributes:
        step: Last completed step.
        losses: Total loss of every step run in this call, in order.
        checkpoint_path: Final checkpoint.
        log_path: Line-delimited metrics log.
    """
    step: int
    losses: list[float] = field(default_factory=list)
    checkpoint_path: Optional[Path] = None
    log_path: Optional[Path] = None


def _append_record(path: Path, record: dict) -> None:
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record, sort_keys=True) + "\n")


def train(
    model: torch.nn.Module,
    dataset: Dataset,
    config: TrainConfig,
    checkpoint_path: Path,
    log_path: Optional[Path] = None,
    resume: Optional[Path] = None,
    stop_at: Optional[int] = None,
) -> TrainResult:
    """Optimize ``model`` on ``dataset`` with AdamW and the one-cycle schedule.

    Args:
        model: StereoModel to train in place.
        dataset: Indexable collection of StereoSample.
        config: Optimization settings.
        checkpoint_path: Where checkpoints are written.
        log_path: Metrics log; defaults to the checkpoint path with a .jsonl suffix.
        resume: Checkpoint to continue from.
        stop_at: Stop after this step (the schedule still spans config.steps).

    Returns:
        TrainResult.

    Raises:
        ValidationError: If the dataset is empty or the config is invalid.
        NonFiniteLoss: If a step produces a NaN or infinite loss.
    """
    validate_train_config(config)
    if len(dataset) == 0:
        raise ValidationError("Training dataset is empty")
    checkpoint_path = Path(checkpoint_path)
    log_path = Path(log_path) if log_path is not None else checkpoint_path.with_suffix(".jsonl")
    try:
        ensure_dir(checkpoint_path.parent)
        ensure_dir(log_path.parent)
    except OSError as e:
        raise DataIOError(f"Cannot create output directory: {e}") from e

    torch.manual_seed(config.seed)
    parameters = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.AdamW(parameters, lr=config.peak_lr, weight_decay=config.weight_decay)

    start_step = 0
    if resume is not None:
        _, container = load_checkpoint(resume, model, optimizer)
        start_step = container.step
        logger.info(f"Resuming from step {start_step}")
    elif log_path.exists():
        log_path.unlink()

    last_step = min(config.steps, stop_at) if stop_at is not None else config.steps
    crop = None if config.crop_height is None else (config.crop_height, config.crop_width)
    loader = DataLoader(
        CroppedView(dataset, config.seed, crop),
        batch_sampler=StepBatchSampler(len(dataset), config.batch_size, config.seed, start_step, last_step),
        collate_fn=collate_samples,
        num_workers=config.num_workers,
    )

    iters = model.config.decoder.train_iters
    result = TrainResult(step=start_step, checkpoint_path=checkpoint_path, log_path=log_path)
    model.train()
    logger.info(f"Training steps {start_step + 1}..{last_step} of {config.steps} on {len(dataset)} samples")

    for step, batch in enumerate(loader, start=start_step + 1):
        batch = pad_batch(batch)
        lr = one_cycle_lr(step, config.steps, config.peak_lr, config.warmup_fraction)
        apply_learning_rate(optimizer, lr)

        output = model(batch["left"], batch["right"], iters=iters)
        try:
            loss, parts = sequence_loss(
                output.init_upsampled, output.predictions, batch["disparity"], batch["mask"], model.config.loss
            )
        except NonFinite as e:
            raise NonFiniteLoss(f"Non-finite loss at step {step} (lr={lr:.3e}): {e}") from e

        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        grad_norm = clip_gradients(parameters, config.grad_clip_norm)
        optimizer.step()

        epe = batch_epe(output.final, batch["disparity"], batch["mask"])
        record = {"step": step, "lr": lr, "loss": parts["total"], "epe": epe}
        _append_record(log_path, record)
        result.losses.append(parts["total"])
        result.step = step

        if step % config.log_every == 0 or step == last_step:
            logger.info(
                f"step {step}/{config.steps} lr {lr:.3e} loss {parts['total']:.4f} "
                f"(init {parts['init']:.4f}, iter {parts['iter']:.4f}) epe {epe:.4f} grad {grad_norm:.3f}"
            )
        if config.checkpoint_every and step % config.checkpoint_every == 0 and step != last_step:
            save_checkpoint(checkpoint_path, model, step, config, optimizer)

    save_checkpoint(checkpoint_path, model, result.step, config, optimizer)
    return result


def read_log(path: Path) -> list[dict]:
    """Records of a metrics log."""
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]
