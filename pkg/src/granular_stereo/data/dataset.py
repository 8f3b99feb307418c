"""Dataset directory layout, loading and cropping.

Layout::

    root/
        left/0000.png
        right/0000.png
        disp/0000.pfm     (or disp/0000.png, 16-bit, value/256)
        valid/0000.png    (optional)
        noc/0000.png      (optional)
"""

import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import torch
from torch.utils.data import Dataset

from granular_stereo.core.types import StereoSample
from granular_stereo.core.validation import validate_sample
from granular_stereo.data.images import read_image, read_mask, write_image, write_mask
from granular_stereo.data.kitti import read_kitti_disp, write_kitti_disp
from granular_stereo.data.pfm import read_pfm, write_pfm
from granular_stereo.data.synthetic import SyntheticSceneSpec, TEXTURE_KINDS, generate_synthetic
from granular_stereo.errors import CropTooLarge, DataIOError, ValidationError
from granular_stereo.utils.fs_utils import ensure_dir

logger = logging.getLogger(__name__)

SeedLike = Union[int, Sequence[int]]

DISPARITY_FORMATS = ("pfm", "png")


def sample_name(index: int) -> str:
    return f"{index:04d}"


def write_dataset(samples: Iterable[StereoSample], root: Path, disparity_format: str = "pfm") -> list[str]:
    """Write samples under ``root`` in the dataset layout, named by position.

    Disparity goes to ``disp/<name>.pfm`` as float32, or to ``disp/<name>.png``
    on the 1/256 grid when ``disparity_format`` is "png". Masks that exclude
    pixels are written to ``valid/``.

    Returns:
        The written sample names.

    Raises:
        DataIOError: If a file cannot be written.
        ValidationError: If a sample has no ground truth or the format is unknown.
    """
    if disparity_format not in DISPARITY_FORMATS:
        raise ValidationError(
            f"Unknown disparity format '{disparity_format}'. Use one of: {', '.join(DISPARITY_FORMATS)}"
        )
    root = Path(root)
    try:
        for sub in ("left", "right", "disp"):
            ensure_dir(root / sub)
    except OSError as e:
        raise DataIOError(f"Cannot create dataset directory {root}: {e}") from e

    names = []
    for index, sample in enumerate(samples):
        if sample.gt_disparity is None:
            raise ValidationError(f"Sample '{sample.name}' has no ground truth to write")
        name = sample_name(index)
        write_image(sample.left, root / "left" / f"{name}.png")
        write_image(sample.right, root / "right" / f"{name}.png")
        valid = sample.effective_valid_mask()
        if disparity_format == "png":
            write_kitti_disp(sample.gt_disparity, root / "disp" / f"{name}.png", valid_mask=valid)
        else:
            write_pfm(sample.gt_disparity, root / "disp" / f"{name}.pfm")
        if sample.valid_mask is not None and not sample.valid_mask.all():
            write_mask(sample.valid_mask, root / "valid" / f"{name}.png")
        if sample.noc_mask is not None:
            write_mask(sample.noc_mask, root / "noc" / f"{name}.png")
        names.append(name)

    logger.info(f"Wrote {len(names)} samples to {root}")
    return names


def scene_seed(seed: int, index: int) -> int:
    """Per-scene seed derived from a dataset seed and the scene index."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def generate_dataset(
    root: Path,
    count: int,
    height: int,
    width: int,
    max_disparity: float,
    seed: int = 0,
    layer_count: int = 3,
    texture_kinds: Sequence[str] = TEXTURE_KINDS,
) -> list[str]:
    """Generate ``count`` synthetic scenes and write them under ``root``.

    Textures cycle through ``texture_kinds``; every scene is determined by (seed, index).

    Raises:
        ValidationError: If count is not positive or a scene parameter is invalid.
        DataIOError: If the output cannot be written.
    """
    if count <= 0:
        raise ValidationError(f"Invalid count: {count}. Must be positive.")
    specs = [
        SyntheticSceneSpec(
            height=height,
            width=width,
            layer_count=layer_count,
            max_disparity=max_disparity,
            texture_kind=texture_kinds[index % len(texture_kinds)],
            seed=scene_seed(seed, index),
            name=sample_name(index),
        )
        for index in range(count)
    ]
    return write_dataset((generate_synthetic(spec) for spec in specs), root)


def random_crop(sample: StereoSample, height: int, width: int, seed: SeedLike) -> StereoSample:
    """Crop the same window from both views, the ground truth and the masks.

    Raises:
        CropTooLarge: If the window exceeds the sample.
    """
    if height > sample.height or width > sample.width or height <= 0 or width <= 0:
        raise CropTooLarge(
            f"Crop {height}x{width} does not fit sample '{sample.name}' of {sample.height}x{sample.width}"
        )
    rng = np.random.default_rng(seed)
    y0 = int(rng.integers(0, sample.height - height + 1))
    x0 = int(rng.integers(0, sample.width - width + 1))
    window = (slice(y0, y0 + height), slice(x0, x0 + width))

    def crop(array: Optional[np.ndarray]) -> Optional[np.ndarray]:
        return None if array is None else np.ascontiguousarray(array[(..., *window)])

    return StereoSample(
        left=crop(sample.left),
        right=crop(sample.right),
        gt_disparity=crop(sample.gt_disparity),
        valid_mask=crop(sample.valid_mask),
        noc_mask=crop(sample.noc_mask),
        name=sample.name,
    )


class StereoDataset(Dataset):
    """Samples of a dataset directory, loaded lazily and cached.

    Args:
        root: Dataset root containing left/, right/ and disp/.

    Raises:
        DataIOError: If the layout is missing or empty.
    """

    def __init__(self, root: Path):
        self.root = Path(root)
        left_dir = self.root / "left"
        if not left_dir.is_dir():
            raise DataIOError(f"Dataset directory {self.root} has no left/ folder")
        self.names = sorted(path.stem for path in left_dir.glob("*.png"))
        if not self.names:
            raise DataIOError(f"Dataset directory {self.root} contains no samples")
        self._cache: dict[int, StereoSample] = {}
        logger.info(f"Found {len(self.names)} samples in {self.root}")

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, index: int) -> StereoSample:
        if index not in self._cache:
            self._cache[index] = self._load(self.names[index])
        return self._cache[index]

    def _optional_mask(self, folder: str, name: str) -> Optional[np.ndarray]:
        path = self.root / folder / f"{name}.png"
        return read_mask(path) if path.exists() else None

    def _load(self, name: str) -> StereoSample:
        gt, valid = None, None
        pfm_path = self.root / "disp" / f"{name}.pfm"
        png_path = self.root / "disp" / f"{name}.png"
        if pfm_path.exists():
            gt, _ = read_pfm(pfm_path)
            valid = np.isfinite(gt)
        elif png_path.exists():
            disparity, valid = read_kitti_disp(png_path)
            gt = disparity.values

        valid_file = self._optional_mask("valid", name)
        if valid is not None and valid_file is not None:
            valid = valid & valid_file
        sample = StereoSample(
            left=read_image(self.root / "left" / f"{name}.png"),
            right=read_image(self.root / "right" / f"{name}.png"),
            gt_disparity=gt,
            valid_mask=valid,
            noc_mask=self._optional_mask("noc", name),
            name=name,
        )
        return validate_sample(sample)

    def samples(self) -> list[StereoSample]:
        return [self[i] for i in range(len(self))]


def collate_samples(samples: Sequence[StereoSample]) -> dict[str, torch.Tensor]:
    """Stack samples of one size into batched tensors.

    Returns:
        Dict with left/right (B, 3, H, W), disparity and mask (B, 1, H, W).
    """
    gts, masks = [], []
    for sample in samples:
        if sample.gt_disparity is None:
            raise ValidationError(f"Sample '{sample.name}' has no ground truth for training")
        gts.append(sample.gt_disparity)
        masks.append(sample.effective_valid_mask())
    return {
        "left": torch.from_numpy(np.stack([s.left for s in samples])),
        "right": torch.from_numpy(np.stack([s.right for s in samples])),
        "disparity": torch.from_numpy(np.stack(gts)[:, None].astype(np.float32)),
        "mask": torch.from_numpy(np.stack(masks)[:, None]),
    }
