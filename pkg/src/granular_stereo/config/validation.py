"""Configuration validation logic."""

import logging

from granular_stereo.config.model import (
    DecoderConfig,
    EncoderConfig,
    LossConfig,
    MatchingConfig,
    ModelConfig,
    TrainConfig,
)
from granular_stereo.errors import ValidationError

logger = logging.getLogger(__name__)

# Pyramid levels down to 1/32 require inputs padded to this multiple.
PAD_MULTIPLE = 32


def _require_positive(value, name: str) -> None:
    if value <= 0:
        raise ValidationError(f"Invalid {name}: {value}. Must be positive.")


def validate_encoder_config(config: EncoderConfig) -> None:
    """Validate encoder sizes.

    Raises:
        ValidationError: If depth is odd, the patch sizes do not divide, or a size is non-positive.
    """
    for name in ("base_patch", "embed_dim", "depth", "heads", "backbone_patch",
                 "fusion_dim", "feature_dim"):
        _require_positive(getattr(config, name), f"encoder.{name}")

    if config.depth % 2 != 0:
        raise ValidationError(
            f"Invalid encoder.depth: {config.depth}. Depth must be even so the middle block is depth/2."
        )
    if config.base_patch % 16 != 0:
        raise ValidationError(
            f"Invalid encoder.base_patch: {config.base_patch}. Must be divisible by 16."
        )
    if config.base_patch % config.backbone_patch != 0:
        raise ValidationError(
            f"encoder.base_patch ({config.base_patch}) must be divisible by "
            f"encoder.backbone_patch ({config.backbone_patch})."
        )
    if config.embed_dim % config.heads != 0:
        raise ValidationError(
            f"encoder.embed_dim ({config.embed_dim}) must be divisible by encoder.heads ({config.heads})."
        )
    if not 0 <= config.finetune_tail <= config.depth:
        raise ValidationError(
            f"Invalid encoder.finetune_tail: {config.finetune_tail}. Must lie in [0, {config.depth}]."
        )
    if len(config.image_mean) != 3 or len(config.image_std) != 3:
        raise ValidationError("encoder.image_mean and encoder.image_std need three values each.")
    if any(s <= 0 for s in config.image_std):
        raise ValidationError(f"Invalid encoder.image_std: {config.image_std}. Must be positive.")


def validate_matching_config(config: MatchingConfig, feature_dim: int) -> None:
    """Validate cost-volume settings against the feature width they correlate.

    Raises:
        ValidationError: If groups do not divide the features or a count is non-positive.
    """
    for name in ("groups", "latent_count", "latent_channels", "attention_blocks",
                 "lsa_window", "gsa_subsample", "heads", "volume_channels"):
        _require_positive(getattr(config, name), f"matching.{name}")

    if feature_dim % config.groups != 0:
        raise ValidationError(
            f"matching.groups ({config.groups}) must divide the feature dimension ({feature_dim})."
        )
    if config.latent_channels % config.heads != 0:
        raise ValidationError(
            f"matching.latent_channels ({config.latent_channels}) must be divisible by "
            f"matching.heads ({config.heads})."
        )
    if config.max_disparity is not None:
        _require_positive(config.max_disparity, "matching.max_disparity")


def validate_decoder_config(config: DecoderConfig) -> None:
    """Validate recurrent refinement settings.

    Raises:
        ValidationError: If kernels are even or misordered, or counts are out of range.
    """
    if config.lookup_radius < 0:
        raise ValidationError(f"Invalid decoder.lookup_radius: {config.lookup_radius}. Must be >= 0.")
    _require_positive(config.train_iters, "decoder.train_iters")
    _require_positive(config.eval_iters, "decoder.eval_iters")
    _require_positive(config.hidden_dim, "decoder.hidden_dim")
    _require_positive(config.motion_dim, "decoder.motion_dim")
    _require_positive(config.guidance_heads, "decoder.guidance_heads")

    for name in ("small_kernel", "large_kernel"):
        kernel = getattr(config, name)
        if kernel <= 0 or kernel % 2 == 0:
            raise ValidationError(f"Invalid decoder.{name}: {kernel}. Kernels must be odd.")
    if config.small_kernel >= config.large_kernel:
        raise ValidationError(
            f"decoder.small_kernel ({config.small_kernel}) must be smaller than "
            f"decoder.large_kernel ({config.large_kernel})."
        )
    if config.upsample_factor != 4:
        raise ValidationError(
            f"Invalid decoder.upsample_factor: {config.upsample_factor}. Only 4 is supported."
        )


def validate_loss_config(config: LossConfig) -> None:
    """Validate loss weights.

    Raises:
        ValidationError: If gamma is outside (0, 1] or beta is not positive.
    """
    if not 0 < config.gamma <= 1:
        raise ValidationError(f"Invalid loss.gamma: {config.gamma}. Must lie in (0, 1].")
    _require_positive(config.smooth_l1_beta, "loss.smooth_l1_beta")


def validate_model_config(config: ModelConfig) -> None:
    """Validate every section of a ModelConfig.

    Raises:
        ValidationError: If any section is invalid.
    """
    logger.debug("Validating model configuration")
    validate_encoder_config(config.encoder)
    validate_matching_config(config.matching, config.encoder.feature_dim)
    validate_decoder_config(config.decoder)
    validate_loss_config(config.loss)

    if config.matching.latent_channels % config.decoder.guidance_heads != 0:
        raise ValidationError(
            f"decoder.guidance_heads ({config.decoder.guidance_heads}) must divide "
            f"matching.latent_channels ({config.matching.latent_channels})."
        )

    ablation = config.ablation
    if ablation.multi_granularity and not (ablation.patch_encoder or ablation.full_encoder):
        raise ValidationError(
            "ablation.patch_encoder and ablation.full_encoder cannot both be off."
        )
    if not ablation.global_volume and not ablation.lookup_concat:
        raise ValidationError(
            "ablation.global_volume and ablation.lookup_concat cannot both be off; "
            "the decoder would receive no cost-volume input."
        )
    if not ablation.global_volume and not ablation.global_guidance:
        logger.warning(
            "ablation.global_guidance is off but ablation.global_volume is also off; "
            "the guidance flag has no effect."
        )


def validate_train_config(config: TrainConfig) -> None:
    """Validate optimization settings.

    Raises:
        ValidationError: If a count, rate or fraction is out of range.
    """
    _require_positive(config.steps, "train.steps")
    _require_positive(config.batch_size, "train.batch_size")
    _require_positive(config.peak_lr, "train.peak_lr")
    _require_positive(config.grad_clip_norm, "train.grad_clip_norm")
    if not 0 < config.warmup_fraction < 1:
        raise ValidationError(
            f"Invalid train.warmup_fraction: {config.warmup_fraction}. Must lie in (0, 1)."
        )
    if config.weight_decay < 0:
        raise ValidationError(f"Invalid train.weight_decay: {config.weight_decay}. Must be >= 0.")
    if config.seed < 0:
        raise ValidationError(f"Invalid train.seed: {config.seed}. Must be >= 0.")
    if config.num_workers < 0:
        raise ValidationError(f"Invalid train.num_workers: {config.num_workers}. Must be >= 0.")
    if config.checkpoint_every < 0:
        raise ValidationError(f"Invalid train.checkpoint_every: {config.checkpoint_every}.")
    _require_positive(config.log_every, "train.log_every")
    if (config.crop_height is None) != (config.crop_width is None):
        raise ValidationError("train.crop_height and train.crop_width must be set together.")
