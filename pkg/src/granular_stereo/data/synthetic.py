"""Synthetic stereo pairs of fronto-parallel textured layers with exact ground truth.

Layer 0 is a full-frame background; later layers are rectangles drawn in
front of it. Layer disparities are sorted ascending, so a later layer is
always nearer and occludes the earlier ones in both views. Texture values
are multiples of 1/255, so an 8-bit PNG round trip is lossless.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from granular_stereo.core.types import StereoSample
from granular_stereo.errors import ValidationError

logger = logging.getLogger(__name__)

TEXTURE_KINDS = ("noise", "gradient", "checker")


@dataclass(frozen=True)
class SyntheticSceneSpec:
    """Parameters of one synthetic scene.

    Attributes:
        height: Image height in pixels.
        width: Image width in pixels.
        layer_count: Number of layers including the background.
        max_disparity: Largest layer disparity; must stay below width/4.
        texture_kind: One of noise, gradient, checker.
        seed: Seed of the scene's random generator.
        allow_half_pixel: Sample half-pixel disparities, rendered by 2x supersampling.
        disparities: Fixed per-layer disparities (sorted before use) instead of random ones.
        name: Sample name.
    """
    height: int
    width: int
    layer_count: int = 3
    max_disparity: float = 8.0
    texture_kind: str = "noise"
    seed: int = 0
    allow_half_pixel: bool = False
    disparities: Optional[tuple[float, ...]] = None
    name: str = "synthetic"

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ValidationError(f"Scene size must be positive, got {self.height}x{self.width}")
        if self.layer_count < 1:
            raise ValidationError(f"Invalid layer_count: {self.layer_count}. Must be >= 1.")
        if not 0 <= self.max_disparity < self.width / 4:
            raise ValidationError(
                f"Invalid max_disparity: {self.max_disparity}. Must lie in [0, width/4) = "
                f"[0, {self.width / 4:g})."
            )
        if self.texture_kind not in TEXTURE_KINDS:
            raise ValidationError(
                f"Unknown texture_kind '{self.texture_kind}'. Use one of: {', '.join(TEXTURE_KINDS)}"
            )
        if self.disparities is not None:
            if len(self.disparities) != self.layer_count:
                raise ValidationError(
                    f"Got {len(self.disparities)} disparities for {self.layer_count} layers"
                )
            step = 0.5 if self.allow_half_pixel else 1.0
            for value in self.disparities:
                if not 0 <= value <= self.max_disparity or (value / step) != round(value / step):
                    raise ValidationError(
                        f"Invalid layer disparity {value}: must be a multiple of {step} in "
                        f"[0, {self.max_disparity}]"
                    )

    @property
    def supersample(self) -> int:
        return 2 if self.allow_half_pixel else 1


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(values, 0, 255)).astype(np.uint8)


def _texture(kind: str, height: int, width: int, supersample: int, rng: np.random.Generator) -> np.ndarray:
    """uint8 texture (3, height, width) in supersampled columns."""
    if kind == "noise":
        # blocks of one source pixel so supersampling does not change the texture scale
        base = rng.integers(0, 256, size=(3, height, math.ceil(width / supersample)), dtype=np.uint8)
        return np.repeat(base, supersample, axis=2)[:, :, :width]

    if kind == "gradient":
        ys = np.arange(height, dtype=np.float64)[:, None]
        xs = np.arange(width, dtype=np.float64)[None, :] / supersample
        slope = rng.uniform(-3.0, 3.0, size=(3, 2))
        offset = rng.uniform(0, 255, size=3)
        ramp = offset[:, None, None] + slope[:, 0, None, None] * ys + slope[:, 1, None, None] * xs
        jitter = rng.integers(-24, 25, size=(3, height, math.ceil(width / supersample)))
        jitter = np.repeat(jitter, supersample, axis=2)[:, :, :width]
        return _quantize(np.mod(ramp, 256) + jitter)

    cell = int(rng.integers(2, 7)) * supersample
    colors = rng.integers(0, 256, size=(2, 3), dtype=np.uint8)
    ys = np.arange(height)[:, None] // (cell // supersample)
    xs = np.arange(width)[None, :] // cell
    parity = (ys + xs) % 2
    texture = colors[parity].transpose(2, 0, 1)
    speckle = rng.random(size=(height, math.ceil(width / supersample))) < 0.15
    speckle = np.repeat(speckle, supersample, axis=1)[:, :width]
    return np.where(speckle[None], 255 - texture, texture).astype(np.uint8)


def _layer_disparities(spec: SyntheticSceneSpec, rng: np.random.Generator) -> list[float]:
    if spec.disparities is not None:
        return sorted(float(d) for d in spec.disparities)
    step = 0.5 if spec.allow_half_pixel else 1.0
    top = int(math.floor(spec.max_disparity / step))
    return sorted(float(v) * step for v in rng.integers(0, top + 1, size=spec.layer_count))


def _layer_rects(spec: SyntheticSceneSpec, rng: np.random.Generator) -> list[tuple[int, int, int, int]]:
    """(y0, y1, x0, x1) per layer in left-view pixel coordinates."""
    rects = [(0, spec.height, 0, spec.width)]
    for _ in range(spec.layer_count - 1):
        h = int(rng.integers(max(1, spec.height // 8), max(2, spec.height // 2) + 1))
        w = int(rng.integers(max(1, spec.width // 8), max(2, spec.width // 2) + 1))
        y0 = int(rng.integers(0, spec.height - h + 1))
        x0 = int(rng.integers(0, spec.width - w + 1))
        rects.append((y0, y0 + h, x0, x0 + w))
    return rects


def _box_downsample(image: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return image.astype(np.float64)
    channels, height, width = image.shape
    return image.reshape(channels, height, width // factor, factor).astype(np.float64).mean(axis=-1)


def generate_synthetic(spec: SyntheticSceneSpec) -> StereoSample:
    """Render a left/right pair, its ground-truth disparity and non-occluded mask.

    The right view sees the left-view point (x, y) of layer k at (x − d_k, y).
    A left pixel is non-occluded when that position lies inside the right
    frame and no nearer layer covers it there.

    Args:
        spec: Scene parameters.

    Returns:
        StereoSample with left, right, gt_disparity, valid_mask (all true) and noc_mask.
    """
    rng = np.random.default_rng(spec.seed)
    factor = spec.supersample
    height, width = spec.height, spec.width * factor
    disparities = _layer_disparities(spec, rng)
    rects = _layer_rects(spec, rng)
    shifts = [int(round(d * factor)) for d in disparities]
    margin = max(shifts) + 1

    left = np.zeros((3, height, width), dtype=np.uint8)
    right = np.zeros((3, height, width), dtype=np.uint8)
    left_ids = np.zeros((height, width), dtype=np.int64)
    right_ids = np.full((height, width), -1, dtype=np.int64)
    columns = np.arange(width)

    for k, ((y0, y1, x0, x1), shift) in enumerate(zip(rects, shifts)):
        texture = _texture(spec.texture_kind, height, width + margin, factor, rng)
        x0s, x1s = x0 * factor, x1 * factor
        # in the right view the background extends past the left frame edge
        right_x1 = width + margin if k == 0 else x1s

        left[:, y0:y1, x0s:x1s] = texture[:, y0:y1, x0s:x1s]
        left_ids[y0:y1, x0s:x1s] = k

        # right column u shows left column u + shift of this layer
        covered = (columns + shift >= x0s) & (columns + shift < right_x1)
        source = columns[covered] + shift
        right[:, y0:y1, covered] = texture[:, y0:y1, source]
        right_ids[y0:y1, covered] = k

    # visible: the right-view position is in frame and shows the same layer
    shift_map = np.asarray(shifts)[left_ids]
    target = columns[None, :] - shift_map
    inside = target >= 0
    rows = np.arange(height)[:, None].repeat(width, axis=1)
    seen = np.full((height, width), -1, dtype=np.int64)
    seen[inside] = right_ids[rows[inside], target[inside]]
    visible = inside & (seen == left_ids)

    gt = np.asarray(disparities, dtype=np.float32)[left_ids[:, ::factor]]
    noc = visible.reshape(height, spec.width, factor).all(axis=-1)
    sample = StereoSample(
        left=(_box_downsample(left, factor) / 255.0).astype(np.float32),
        right=(_box_downsample(right, factor) / 255.0).astype(np.float32),
        gt_disparity=gt,
        valid_mask=np.ones((spec.height, spec.width), dtype=bool),
        noc_mask=noc,
        name=spec.name,
    )
    logger.debug(
        f"Generated {spec.name}: {spec.height}x{spec.width}, disparities {disparities}, "
        f"{noc.mean() * 100:.1f}% non-occluded"
    )
    return sample
