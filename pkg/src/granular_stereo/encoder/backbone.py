"""Vision transformer backbone shared by the patch and full-image paths."""

import logging
from pathlib import Path
from typing import Iterable, Union

import torch
import torch.nn as nn
import torch.nn.functional as F
from einops import rearrange

from granular_stereo.config.model import EncoderConfig
from granular_stereo.errors import BadTapLayer, ShapeMismatch
from granular_stereo.layers import FeedForward, MultiHeadAttention, init_transformer_weights

logger = logging.getLogger(__name__)


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(heads, dim, dim)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = FeedForward(dim, mlp_ratio)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        x = x + self.attn(h, h)
        return x + self.mlp(self.norm2(x))


class ViTBackbone(nn.Module):
    """Patch-embedding transformer without a class token.

    The learned position grid is sized for ``base_patch`` inputs and resized
    bicubically for any other input size, so a full image of exactly
    ``base_patch`` pixels goes through the same arithmetic as a single tile.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.depth = config.depth
        self.patch_size = config.backbone_patch
        grid = config.base_patch // config.backbone_patch

        self.patch_embed = nn.Conv2d(
            3, config.embed_dim, kernel_size=config.backbone_patch, stride=config.backbone_patch
        )
        self.pos_embed = nn.Parameter(torch.zeros(1, config.embed_dim, grid, grid))
        self.blocks = nn.ModuleList(
            [TransformerBlock(config.embed_dim, config.heads, config.mlp_ratio) for _ in range(config.depth)]
        )
        self.norm = nn.LayerNorm(config.embed_dim)

        self.register_buffer("image_mean", torch.tensor(config.image_mean).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("image_std", torch.tensor(config.image_std).view(1, 3, 1, 1), persistent=False)

        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.apply(init_transformer_weights)

    @property
    def allowed_taps(self) -> set[int]:
        return set(self.config.tap_layers)

    def _position_embedding(self, height: int, width: int) -> torch.Tensor:
        if self.pos_embed.shape[-2:] == (height, width):
            return self.pos_embed
        return F.interpolate(self.pos_embed, size=(height, width), mode="bicubic", align_corners=False)

    def encode_tokens(self, images: torch.Tensor, tap_layers: Iterable[int]) -> dict[int, torch.Tensor]:
        """Run the transformer and return token maps after the requested blocks.

        Args:
            images: Tensor (B, 3, H, W) with values in [0, 1]; H and W at least
                one backbone patch.
            tap_layers: 1-based block indices drawn from depth/4, depth/2,
                3·depth/4 and depth.

        Returns:
            Dict of layer -> tensor (B, embed_dim, H / backbone_patch, W / backbone_patch).

        Raises:
            BadTapLayer: If a requested layer is not a permitted tap.
            ShapeMismatch: If the images are not (B, 3, H, W).
        """
        taps = sorted(set(tap_layers))
        bad = [layer for layer in taps if layer not in self.allowed_taps]
        if bad:
            raise BadTapLayer(
                f"Tap layers {bad} not allowed; choose from {sorted(self.allowed_taps)}"
            )
        if images.dim() != 4 or images.shape[1] != 3:
            raise ShapeMismatch(f"Backbone expects (B, 3, H, W) images, got {tuple(images.shape)}")

        x = (images - self.image_mean.to(images.dtype)) / self.image_std.to(images.dtype)
        x = self.patch_embed(x)
        height, width = x.shape[-2:]
        x = x + self._position_embedding(height, width)
        x = rearrange(x, "b c h w -> b (h w) c")

        outputs = {}
        for index, block in enumerate(self.blocks, start=1):
            x = block(x)
            if index in taps:
                outputs[index] = rearrange(self.norm(x), "b (h w) c -> b c h w", h=height, w=width)
            if index == taps[-1]:
                break
        return outputs

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.encode_tokens(images, [self.depth])[self.depth]


def _backbone_of(module: nn.Module) -> ViTBackbone:
    backbone = module if isinstance(module, ViTBackbone) else getattr(module, "backbone", None)
    if not isinstance(backbone, ViTBackbone):
        raise ShapeMismatch(f"{type(module).__name__} has no transformer backbone")
    return backbone


def freeze_backbone(module: nn.Module, finetune_tail: int) -> int:
    """Freeze the backbone except normalization layers and the last ``finetune_tail`` blocks.

    Args:
        module: A ViTBackbone or a module exposing one as ``.backbone``.
        finetune_tail: Number of trailing blocks left trainable.

    Returns:
        Number of backbone parameters left trainable.
    """
    backbone = _backbone_of(module)
    for param in backbone.parameters():
        param.requires_grad_(False)

    for submodule in backbone.modules():
        if isinstance(submodule, nn.LayerNorm):
            for param in submodule.parameters():
                param.requires_grad_(True)

    if finetune_tail > 0:
        for block in backbone.blocks[-finetune_tail:]:
            for param in block.parameters():
                param.requires_grad_(True)

    trainable = sum(p.numel() for p in backbone.parameters() if p.requires_grad)
    total = sum(p.numel() for p in backbone.parameters())
    logger.info(f"Backbone frozen: {trainable}/{total} parameters trainable (tail={finetune_tail})")
    return trainable


def load_backbone_weights(module: nn.Module, path: Union[str, Path], finetune_tail: int) -> None:
    """Load backbone weights from a checkpoint container and apply the freezing policy.

    Accepts either a full-model checkpoint (tensors under ``model.encoder.backbone.``)
    or one holding only the backbone.

    Raises:
        CheckpointVersionError: If the container version is unsupported.
        DataIOError: If the file cannot be read.
        ShapeMismatch: If the stored tensors do not fit the backbone.
    """
    from granular_stereo.training.checkpoint import read_container

    backbone = _backbone_of(module)
    container = read_container(path)
    prefix = "model.encoder.backbone."
    state = container.with_prefix(prefix) or dict(container.tensors)

    try:
        backbone.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise ShapeMismatch(f"Backbone weights in {path} do not fit: {e}") from e

    logger.info(f"Loaded backbone weights from {path}")
    freeze_backbone(backbone, finetune_tail)
