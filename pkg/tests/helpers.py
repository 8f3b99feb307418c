"""Builders and checks shared by the test modules."""

import numpy as np
import torch

from granular_stereo.config.model import (
    AblationConfig,
    DecoderConfig,
    EncoderConfig,
    MatchingConfig,
    ModelConfig,
    TrainConfig,
)
from granular_stereo.core.types import StereoSample
from granular_stereo.data.synthetic import SyntheticSceneSpec, generate_synthetic


def make_tiny_config(**ablation) -> ModelConfig:
    """A model small enough to run forward and backward passes in a test."""
    return ModelConfig(
        encoder=EncoderConfig(
            base_patch=32,
            embed_dim=16,
            depth=4,
            heads=2,
            backbone_patch=4,
            finetune_tail=1,
            fusion_dim=16,
            feature_dim=16,
            mlp_ratio=2.0,
        ),
        matching=MatchingConfig(
            groups=4,
            latent_count=4,
            latent_channels=8,
            attention_blocks=1,
            lsa_window=2,
            gsa_subsample=2,
            heads=2,
            volume_channels=4,
        ),
        decoder=DecoderConfig(
            lookup_radius=1,
            train_iters=2,
            eval_iters=2,
            hidden_dim=8,
            motion_dim=8,
        ),
        ablation=AblationConfig(**ablation),
    )


def make_train_config(**overrides) -> TrainConfig:
    """Training settings for runs of a handful of steps."""
    values = dict(
        steps=2,
        batch_size=1,
        peak_lr=1e-3,
        warmup_fraction=0.5,
        weight_decay=0.0,
        grad_clip_norm=1.0,
        seed=0,
        checkpoint_every=0,
        log_every=1,
    )
    values.update(overrides)
    return TrainConfig(**values)


def make_sample(height=32, width=64, layer_count=2, max_disparity=4.0, seed=0, name="sample", **kwargs) -> StereoSample:
    """Synthetic sample with exact ground truth."""
    spec = SyntheticSceneSpec(
        height=height,
        width=width,
        layer_count=layer_count,
        max_disparity=max_disparity,
        seed=seed,
        name=name,
        **kwargs,
    )
    return generate_synthetic(spec)


def make_images(batch=1, height=32, width=64, seed=0, dtype=torch.float32) -> tuple[torch.Tensor, torch.Tensor]:
    """Random left/right batches in [0, 1]."""
    generator = torch.Generator().manual_seed(seed)
    left = torch.rand(batch, 3, height, width, generator=generator, dtype=dtype)
    right = torch.rand(batch, 3, height, width, generator=generator, dtype=dtype)
    return left, right


def check_gradients(module, objective, count=10, eps=1e-6, rtol=1e-3, atol=1e-7, seed=0) -> list[tuple]:
    """Compare analytic and central-difference gradients of a scalar objective.

    Entries are drawn uniformly over all trainable parameter entries of
    ``module``; run the module in float64.

    Returns:
        List of (parameter name, flat index, analytic, numeric) for mismatches.
    """
    named = [(name, p) for name, p in module.named_parameters() if p.requires_grad]
    sizes = np.array([p.numel() for _, p in named])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    rng = np.random.default_rng(seed)
    picks = rng.choice(int(offsets[-1]), size=count, replace=False)

    module.zero_grad(set_to_none=True)
    objective().backward()

    failures = []
    for pick in picks:
        which = int(np.searchsorted(offsets, pick, side="right") - 1)
        name, param = named[which]
        index = int(pick - offsets[which])
        analytic = 0.0 if param.grad is None else param.grad.reshape(-1)[index].item()

        flat = param.data.view(-1)
        original = flat[index].item()
        with torch.no_grad():
            flat[index] = original + eps
            plus = objective().item()
            flat[index] = original - eps
            minus = objective().item()
            flat[index] = original
        numeric = (plus - minus) / (2 * eps)

        if abs(analytic - numeric) > rtol * max(abs(analytic), abs(numeric)) + atol:
            failures.append((name, index, analytic, numeric))
    return failures


def weighted_sum(tensors, seed=0) -> torch.Tensor:
    """Scalar objective: a fixed random weighting of every tensor."""
    generator = torch.Generator().manual_seed(seed)
    total = 0
    for tensor in tensors:
        weights = torch.randn(tensor.shape, generator=generator, dtype=torch.float64).to(tensor.dtype)
        total = total + (tensor * weights).sum()
    return total
