"""Image-feature and context heads on top of the fused pyramid."""

import logging

import torch
import torch.nn as nn

from granular_stereo.core.types import ContextPyramid, FeaturePyramid
from granular_stereo.layers import group_count

logger = logging.getLogger(__name__)


def _head(in_dim: int, out_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_dim, in_dim, kernel_size=3, padding=1),
        nn.GroupNorm(group_count(in_dim), in_dim),
        nn.ReLU(),
        nn.Conv2d(in_dim, out_dim, kernel_size=1),
    )


class FeatureHeads(nn.Module):
    """Per-level heads: matching features for all four levels, context for the first three.

    The context branch also produces the (c_z, c_r, c_h) gate injections of
    the recurrent units, one triplet per level.
    """

    def __init__(self, pyramid_dim: int, feature_dim: int, context_dim: int):
        super().__init__()
        self.context_dim = context_dim
        self.image_heads = nn.ModuleList([_head(pyramid_dim, feature_dim) for _ in range(4)])
        self.context_heads = nn.ModuleList([_head(pyramid_dim, context_dim) for _ in range(3)])
        self.gate_convs = nn.ModuleList(
            [nn.Conv2d(context_dim, 3 * context_dim, kernel_size=3, padding=1) for _ in range(3)]
        )

    def image_features(self, pyramid: FeaturePyramid) -> FeaturePyramid:
        return FeaturePyramid(tuple(head(level) for head, level in zip(self.image_heads, pyramid.levels)))

    def context_features(self, pyramid: FeaturePyramid) -> ContextPyramid:
        levels = []
        gates = []
        for head, gate_conv, level in zip(self.context_heads, self.gate_convs, pyramid.levels[:3]):
            context = head(level)
            levels.append(context)
            gates.append(tuple(torch.split(gate_conv(torch.relu(context)), self.context_dim, dim=1)))
        return ContextPyramid(tuple(levels), tuple(gates))

    def forward(self, pyramid: FeaturePyramid) -> tuple[FeaturePyramid, ContextPyramid]:
        return apply_heads(self, pyramid)


def apply_heads(heads: FeatureHeads, pyramid: FeaturePyramid) -> tuple[FeaturePyramid, ContextPyramid]:
    """Run both heads.

    Returns:
        Tuple of (image features at 1/4..1/32, context at 1/4..1/16).
    """
    return heads.image_features(pyramid), heads.context_features(pyramid)
