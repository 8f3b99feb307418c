"""Disparity file formats, images, synthetic scenes and datasets."""

from granular_stereo.data.dataset import (
    StereoDataset,
    collate_samples,
    generate_dataset,
    random_crop,
    write_dataset,
)
from granular_stereo.data.images import read_image, read_mask, write_image, write_mask
from granular_stereo.data.kitti import read_kitti_disp, write_kitti_disp
from granular_stereo.data.pfm import read_pfm, write_pfm
from granular_stereo.data.synthetic import SyntheticSceneSpec, generate_synthetic

__all__ = [
    "StereoDataset",
    "SyntheticSceneSpec",
    "collate_samples",
    "generate_dataset",
    "generate_synthetic",
    "random_crop",
    "read_image",
    "read_kitti_disp",
    "read_mask",
    "read_pfm",
    "write_dataset",
    "write_image",
    "write_kitti_disp",
    "write_mask",
    "write_pfm",
]
