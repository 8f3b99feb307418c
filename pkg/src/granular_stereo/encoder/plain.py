"""Convolutional pyramid used when the multi-granularity encoder is switched off."""

import logging

import torch
import torch.nn as nn

from granular_stereo.config.model import EncoderConfig
from granular_stereo.core.types import FeaturePyramid
from granular_stereo.errors import ShapeMismatch
from granular_stereo.layers import ResidualBlock, group_count

logger = logging.getLogger(__name__)


class PlainConvEncoder(nn.Module):
    """Residual CNN producing the same four levels and channel count as the transformer encoder."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        dim = config.fusion_dim
        stem = max(dim // 2, 8)

        self.register_buffer("image_mean", torch.tensor(config.image_mean).view(1, 3, 1, 1), persistent=False)
        self.register_buffer("image_std", torch.tensor(config.image_std).view(1, 3, 1, 1), persistent=False)

        self.stem = nn.Sequential(
            nn.Conv2d(3, stem, kernel_size=7, stride=2, padding=3),
            nn.GroupNorm(group_count(stem), stem),
            nn.ReLU(),
        )
        self.layer_4 = nn.Sequential(ResidualBlock(stem, dim, stride=2), ResidualBlock(dim, dim))
        self.layer_8 = nn.Sequential(ResidualBlock(dim, dim, stride=2), ResidualBlock(dim, dim))
        self.layer_16 = nn.Sequential(ResidualBlock(dim, dim, stride=2), ResidualBlock(dim, dim))
        self.layer_32 = nn.Sequential(ResidualBlock(dim, dim, stride=2), ResidualBlock(dim, dim))

    @property
    def output_dim(self) -> int:
        return self.config.fusion_dim

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        height, width = images.shape[-2:]
        if height % 32 or width % 32:
            raise ShapeMismatch(f"Encoder input {height}x{width} must be padded to a multiple of 32")

        x = (images - self.image_mean.to(images.dtype)) / self.image_std.to(images.dtype)
        x = self.stem(x)
        f1 = self.layer_4(x)
        f2 = self.layer_8(f1)
        f3 = self.layer_16(f2)
        f4 = self.layer_32(f3)
        return FeaturePyramid((f1, f2, f3, f4))
