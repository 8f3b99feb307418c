"""Feature encoders producing the four-level pyramid."""

from granular_stereo.encoder.backbone import ViTBackbone, freeze_backbone, load_backbone_weights
from granular_stereo.encoder.fusion import FusionNetwork, fuse_pyramid
from granular_stereo.encoder.heads import FeatureHeads, apply_heads
from granular_stereo.encoder.network import MultiGranularityEncoder
from granular_stereo.encoder.plain import PlainConvEncoder
from granular_stereo.encoder.tiling import PatchGrid, TokenGrid, merge_patch_tokens, tile_image

__all__ = [
    "FeatureHeads",
    "FusionNetwork",
    "MultiGranularityEncoder",
    "PatchGrid",
    "PlainConvEncoder",
    "TokenGrid",
    "ViTBackbone",
    "apply_heads",
    "freeze_backbone",
    "fuse_pyramid",
    "load_backbone_weights",
    "merge_patch_tokens",
    "tile_image",
]
