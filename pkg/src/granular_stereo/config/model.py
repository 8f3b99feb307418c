"""Configuration data models."""

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

logger = logging.getLogger(__name__)


def _from_flat_dict(cls, data: dict):
    """Build a flat dataclass from a dict; missing keys take defaults, unknown keys raise KeyError."""
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise KeyError(", ".join(sorted(unknown)))
    return cls(**data)


@dataclass
class EncoderConfig:
    """Multi-granularity encoder sizes.

    Attributes:
        base_patch: Side of the square tiles fed to the backbone (pixels).
        embed_dim: Transformer width.
        depth: Number of transformer blocks (even; the middle tap is depth/2).
        heads: Attention heads per block.
        backbone_patch: Pixels per token inside the backbone.
        finetune_tail: Trainable trailing blocks when external weights are loaded.
        fusion_dim: Channel count of the fused feature pyramid.
        feature_dim: Channel count of the image-feature head output.
        mlp_ratio: Hidden expansion of the transformer feed-forward layers.
        image_mean: Per-channel normalization mean applied inside the encoder.
        image_std: Per-channel normalization std applied inside the encoder.
    """
    base_patch: int = 32
    embed_dim: int = 64
    depth: int = 4
    heads: int = 4
    backbone_patch: int = 2
    finetune_tail: int = 1
    fusion_dim: int = 64
    feature_dim: int = 64
    mlp_ratio: float = 4.0
    image_mean: tuple[float, float, float] = (0.5, 0.5, 0.5)
    image_std: tuple[float, float, float] = (0.5, 0.5, 0.5)

    @property
    def tap_layers(self) -> tuple[int, int, int, int]:
        """Layers a full-image pass may tap: depth/4, depth/2, 3·depth/4, depth."""
        return (self.depth // 4, self.depth // 2, 3 * self.depth // 4, self.depth)

    def to_dict(self) -> dict:
        """Convert to dictionary for serialization."""
        result = asdict(self)
        result["image_mean"] = list(self.image_mean)
        result["image_std"] = list(self.image_std)
        return result

    @classmethod
    def from_dict(cls, data: dict) -> "EncoderConfig":
        data = dict(data)
        for key in ("image_mean", "image_std"):
            if key in data:
                data[key] = tuple(float(v) for v in data[key])
        return _from_flat_dict(cls, data)


@dataclass
class MatchingConfig:
    """Local-global cost volume settings.

    Attributes:
        groups: Channel groups of the grouped correlation.
        latent_count: Number of learned latent disparity tokens (L).
        latent_channels: Width of each latent token (C).
        attention_blocks: Stacked bidirectional attention blocks.
        lsa_window: Window side of locally-grouped self-attention.
        gsa_subsample: Key/value subsampling factor of global sub-sampled attention.
        max_disparity: Disparity candidates at 1/4 resolution; None means the feature width.
        heads: Attention heads in the latent and spatial attentions.
        volume_channels: Channel count of the regularized local volume.
    """
    groups: int = 8
    latent_count: int = 16
    latent_channels: int = 32
    attention_blocks: int = 3
    lsa_window: int = 4
    gsa_subsample: int = 2
    max_disparity: Optional[int] = None
    heads: int = 4
    volume_channels: int = 8

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MatchingConfig":
        return _from_flat_dict(cls, data)


@dataclass
class DecoderConfig:
    """Guided recurrent refinement settings."""
    lookup_radius: int = 4
    train_iters: int = 16
    eval_iters: int = 32
    small_kernel: int = 3
    large_kernel: int = 5
    upsample_factor: int = 4
    hidden_dim: int = 64
    motion_dim: int = 64
    guidance_heads: int = 1
    latent_position_encoding: bool = True

    @property
    def lookup_samples(self) -> int:
        """Samples per lookup, R = 2r + 1."""
        return 2 * self.lookup_radius + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DecoderConfig":
        return _from_flat_dict(cls, data)


@dataclass
class LossConfig:
    """Loss weights: gamma for the iteration sequence, beta for smooth-L1."""
    gamma: float = 0.9
    smooth_l1_beta: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "LossConfig":
        return _from_flat_dict(cls, data)


@dataclass
class AblationConfig:
    """Component toggles; every flag defaults to on (the full model).

    Attributes:
        multi_granularity: Off replaces the transformer encoder with a plain CNN pyramid.
        global_volume: Off skips the latent/global volume entirely; the decoder
            consumes only the local lookup.
        global_guidance: Off samples the global volume locally and concatenates it
            instead of cross-attending.
        patch_encoder: Off drops the tiled patch path of the encoder.
        full_encoder: Off drops the full-image path of the encoder.
        half_scale_patches: Off drops the half-resolution patch sequence.
        fusion_network: Off replaces residual fusion blocks with plain sums.
        disparity_attention: Off drops the per-pixel latent self-attention.
        spatial_attention: Off drops the windowed/sub-sampled spatial attention.
        lookup_concat: Off removes the local lookup from the motion-encoder input.
    """
    multi_granularity: bool = True
    global_volume: bool = True
    global_guidance: bool = True
    patch_encoder: bool = True
    full_encoder: bool = True
    half_scale_patches: bool = True
    fusion_network: bool = True
    disparity_attention: bool = True
    spatial_attention: bool = True
    lookup_concat: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "AblationConfig":
        return _from_flat_dict(cls, data)


@dataclass
class ModelConfig:
    """Full network configuration."""
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    matching: MatchingConfig = field(default_factory=MatchingConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def to_dict(self) -> dict:
        """Convert to a nested dictionary keyed by section."""
        return {
            "encoder": self.encoder.to_dict(),
            "matching": self.matching.to_dict(),
            "decoder": self.decoder.to_dict(),
            "loss": self.loss.to_dict(),
            "ablation": self.ablation.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        """Create a ModelConfig from a nested dictionary; missing sections use defaults.

        Raises:
            KeyError: If a section contains unknown keys.
        """
        return cls(
            encoder=EncoderConfig.from_dict(data.get("encoder", {})),
            matching=MatchingConfig.from_dict(data.get("matching", {})),
            decoder=DecoderConfig.from_dict(data.get("decoder", {})),
            loss=LossConfig.from_dict(data.get("loss", {})),
            ablation=AblationConfig.from_dict(data.get("ablation", {})),
        )

    @classmethod
    def full_scale_preset(cls) -> "ModelConfig":
        """Full-scale sizes: 224-pixel tiles over a 14-pixel-token ViT-L sized backbone."""
        return cls(
            encoder=EncoderConfig(
                base_patch=224,
                embed_dim=1024,
                depth=24,
                heads=16,
                backbone_patch=14,
                finetune_tail=4,
                fusion_dim=256,
                feature_dim=256,
            ),
            matching=MatchingConfig(latent_channels=64, volume_channels=8),
            decoder=DecoderConfig(hidden_dim=128, motion_dim=128),
        )


@dataclass
class TrainConfig:
    """Optimization settings.

    Attributes:
        steps: Total optimizer steps.
        batch_size: Samples per step.
        peak_lr: Learning rate at the end of warm-up.
        warmup_fraction: Fraction of steps spent ramping up from zero.
        weight_decay: Decoupled weight decay of AdamW.
        grad_clip_norm: Global gradient-norm clip threshold.
        seed: Seed for parameters, batch order and crops.
        crop_height: Random-crop height (None keeps the full sample).
        crop_width: Random-crop width (None keeps the full sample).
        num_workers: Data-loading worker processes.
        checkpoint_every: Steps between checkpoints (0 writes only the final one).
        log_every: Steps between log lines.
    """
    steps: int = 3000
    batch_size: int = 2
    peak_lr: float = 2e-4
    warmup_fraction: float = 0.01
    weight_decay: float = 1e-5
    grad_clip_norm: float = 1.0
    seed: int = 0
    crop_height: Optional[int] = None
    crop_width: Optional[int] = None
    num_workers: int = 0
    checkpoint_every: int = 500
    log_every: int = 10

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return _from_flat_dict(cls, data)
