"""The assembled stereo network and its inference wrapper."""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import numpy as np
import torch
import torch.nn as nn

from granular_stereo.config.model import ModelConfig
from granular_stereo.config.validation import PAD_MULTIPLE, validate_model_config
from granular_stereo.core.padding import crop_to_original, pad_to_multiple
from granular_stereo.core.types import DisparityMap, FeaturePyramid
from granular_stereo.decoder.refinement import GuidedRefinement, run_iterations
from granular_stereo.decoder.upsample import bilinear_upsample
from granular_stereo.encoder.heads import FeatureHeads
from granular_stereo.encoder.network import MultiGranularityEncoder
from granular_stereo.encoder.plain import PlainConvEncoder
from granular_stereo.errors import ShapeMismatch
from granular_stereo.matching.block import MatchingBlock, MatchingOutput

logger = logging.getLogger(__name__)

ImageLike = Union[np.ndarray, torch.Tensor]


@dataclass(frozen=True, eq=False)
class StereoOutput:
    """Network outputs for one batch.

    Attributes:
        init_disparity: d0 at 1/4 resolution (B, 1, H/4, W/4).
        init_upsampled: d0 resized to (B, 1, H, W), values in full-resolution pixels.
        predictions: Full-resolution disparities after each refinement step.
        features: Left image feature pyramid.
        matching: Volumes built for the batch.
    """
    init_disparity: torch.Tensor
    init_upsampled: torch.Tensor
    predictions: list[torch.Tensor]
    features: FeaturePyramid
    matching: MatchingOutput

    @property
    def final(self) -> torch.Tensor:
        return self.predictions[-1]


def _split_pyramid(pyramid: FeaturePyramid, batch: int) -> tuple[FeaturePyramid, FeaturePyramid]:
    left = FeaturePyramid(tuple(level[:batch] for level in pyramid.levels))
    right = FeaturePyramid(tuple(level[batch:] for level in pyramid.levels))
    return left, right


class StereoModel(nn.Module):
    """Encoder, matching block and recurrent decoder.

    Args:
        config: Model configuration; validated on construction.
    """

    def __init__(self, config: Optional[ModelConfig] = None):
        super().__init__()
        self.config = config or ModelConfig()
        validate_model_config(self.config)
        enc = self.config.encoder
        ablation = self.config.ablation

        if ablation.multi_granularity:
            self.encoder = MultiGranularityEncoder(enc, ablation)
        else:
            self.encoder = PlainConvEncoder(enc)
        self.heads = FeatureHeads(self.encoder.output_dim, enc.feature_dim, self.config.decoder.hidden_dim)
        self.matching = MatchingBlock(self.config.matching, enc.feature_dim, ablation)
        self.decoder = GuidedRefinement(
            self.config.decoder,
            self.config.matching.latent_channels,
            self.config.matching.latent_count,
            ablation,
        )
        logger.debug(f"Built StereoModel with {sum(p.numel() for p in self.parameters())} parameters")

    def forward(self, left: torch.Tensor, right: torch.Tensor, iters: Optional[int] = None) -> StereoOutput:
        """
        Args:
            left: Left images (B, 3, H, W) in [0, 1], H and W multiples of 32.
            right: Right images, same shape.
            iters: Refinement steps; defaults to the train or eval count by mode.

        Raises:
            ShapeMismatch: If the images differ in shape or are not padded.
        """
        if left.shape != right.shape:
            raise ShapeMismatch(f"Left {tuple(left.shape)} and right {tuple(right.shape)} images differ")
        if iters is None:
            iters = self.config.decoder.train_iters if self.training else self.config.decoder.eval_iters

        batch = left.shape[0]
        pyramid = self.encoder(torch.cat([left, right], dim=0))
        left_features, right_features = _split_pyramid(self.heads.image_features(pyramid), batch)
        context = self.heads.context_features(_split_pyramid(pyramid, batch)[0])

        matching = self.matching(left_features, right_features)
        predictions = run_iterations(
            self.decoder, context, matching.lcv, matching.gcv, matching.init_disparity, iters
        )
        return StereoOutput(
            init_disparity=matching.init_disparity,
            init_upsampled=bilinear_upsample(matching.init_disparity, self.config.decoder.upsample_factor),
            predictions=predictions,
            features=left_features,
            matching=matching,
        )


def _as_batch(image: ImageLike, device: torch.device, dtype: torch.dtype) -> torch.Tensor:
    tensor = torch.as_tensor(np.asarray(image) if isinstance(image, np.ndarray) else image)
    if tensor.dim() == 3:
        tensor = tensor.unsqueeze(0)
    return tensor.to(device=device, dtype=dtype)


@torch.no_grad()
def predict_all_iterations(
    model: StereoModel, left: ImageLike, right: ImageLike, iters: Optional[int] = None
) -> list[DisparityMap]:
    """Full-resolution disparity after each refinement step for one unpadded pair (3, H, W)."""
    param = next(model.parameters())
    left_t = _as_batch(left, param.device, param.dtype)
    right_t = _as_batch(right, param.device, param.dtype)
    if left_t.shape != right_t.shape:
        raise ShapeMismatch(f"Left {tuple(left_t.shape)} and right {tuple(right_t.shape)} images differ")

    left_p, record = pad_to_multiple(left_t, PAD_MULTIPLE)
    right_p, _ = pad_to_multiple(right_t, PAD_MULTIPLE)

    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            output = model(left_p, right_p, iters=iters)
    finally:
        model.train(was_training)
    return [DisparityMap.from_tensor(crop_to_original(pred[0, 0], record), Fraction(1)) for pred in output.predictions]


def predict_disparity(
    model: StereoModel, left: ImageLike, right: ImageLike, iters: Optional[int] = None
) -> DisparityMap:
    """Pad to a multiple of 32, run the network and crop back to the input size.

    Args:
        model: Trained network.
        left: Left image (3, H, W) in [0, 1].
        right: Right image (3, H, W).
        iters: Refinement steps (defaults to the eval count).

    Returns:
        Full-resolution DisparityMap.
    """
    return predict_all_iterations(model, left, right, iters)[-1]
