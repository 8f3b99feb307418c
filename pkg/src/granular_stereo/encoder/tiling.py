"""Overlapping patch tiling and the inverse token merge.

A padded image is cut into square tiles at a fixed overlap; after the
backbone has turned every tile into a token map, ``merge_patch_tokens``
stitches the maps back into one grid. Where tiles overlap, each output cell
takes its token from the tile whose center is nearest, with ties going to
the earlier tile in row-major order.
"""

import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

import torch

from granular_stereo.errors import ImageTooSmall, InconsistentTokenDims, ValidationError

logger = logging.getLogger(__name__)

SCALE_OVERLAP = {"full": Fraction(1, 4), "half": Fraction(1, 2)}

LEVEL_TAGS = ("patch_mid", "patch_last", "patch_multi", "full_multi")


@dataclass(frozen=True, eq=False)
class PatchGrid:
    """Tiles cut from one source grid.

    Attributes:
        patches: Tensor (..., N, 3, P, P); leading dims follow the source.
        positions: Top-left (row, col) of each tile in the source, row-major.
        scale: "full" or "half", the resolution of the source relative to the input.
        overlap_fraction: 1/4 for full scale, 1/2 for half scale.
        source_height: Height of the tiled source grid.
        source_width: Width of the tiled source grid.
    """
    patches: torch.Tensor
    positions: tuple[tuple[int, int], ...]
    scale: str
    overlap_fraction: Fraction
    source_height: int
    source_width: int

    def __post_init__(self):
        expected = SCALE_OVERLAP.get(self.scale)
        if expected is None:
            raise ValidationError(f"Invalid patch scale: {self.scale!r}. Must be 'full' or 'half'.")
        if self.overlap_fraction != expected:
            raise ValidationError(
                f"Scale {self.scale!r} requires overlap {expected}, got {self.overlap_fraction}"
            )

    @property
    def patch_size(self) -> int:
        return int(self.patches.shape[-1])

    @property
    def count(self) -> int:
        return len(self.positions)


@dataclass(frozen=True, eq=False)
class TokenGrid:
    """Merged token map.

    Attributes:
        tokens: Tensor (..., dim, h, w).
        scale: Grid resolution relative to the original input (1/16 or 1/32 once reassembled).
        level_tag: Which taps the grid carries: "patch_mid", "patch_last",
            "patch_multi" (both patch taps fused) or "full_multi".
    """
    tokens: torch.Tensor
    scale: Fraction
    level_tag: str

    def __post_init__(self):
        if self.level_tag not in LEVEL_TAGS:
            raise ValidationError(f"Unknown token level tag: {self.level_tag!r}")

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[-3])

    @property
    def height(self) -> int:
        return int(self.tokens.shape[-2])

    @property
    def width(self) -> int:
        return int(self.tokens.shape[-1])


def axis_positions(length: int, patch: int, stride: int) -> list[int]:
    """Tile offsets along one axis: multiples of ``stride`` plus an edge-snapped last tile."""
    positions = list(range(0, length - patch + 1, stride))
    if positions[-1] != length - patch:
        positions.append(length - patch)
    return positions


def tile_image(image: torch.Tensor, patch: int, overlap: Fraction) -> PatchGrid:
    """Cut an image into overlapping square tiles.

    Args:
        image: Tensor (..., 3, H, W), already padded.
        patch: Tile side P.
        overlap: 1/4 (full-scale sequence) or 1/2 (half-scale sequence).

    Returns:
        PatchGrid whose tiles cover every pixel of the image.

    Raises:
        ImageTooSmall: If H or W is smaller than P.
        ValidationError: If the overlap is not 1/4 or 1/2.
    """
    overlap = Fraction(overlap)
    scale = next((name for name, value in SCALE_OVERLAP.items() if value == overlap), None)
    if scale is None:
        raise ValidationError(f"Invalid overlap: {overlap}. Must be 1/4 or 1/2.")

    height, width = int(image.shape[-2]), int(image.shape[-1])
    if height < patch or width < patch:
        raise ImageTooSmall(f"Image {height}x{width} is smaller than the {patch}x{patch} tile size")

    stride = patch * (1 - overlap)
    if stride.denominator != 1:
        raise ValidationError(f"Tile size {patch} with overlap {overlap} gives a fractional stride")
    stride = int(stride)

    rows = axis_positions(height, patch, stride)
    cols = axis_positions(width, patch, stride)
    positions = tuple((top, left) for top in rows for left in cols)
    patches = torch.stack(
        [image[..., top:top + patch, left:left + patch] for top, left in positions],
        dim=image.dim() - 3,
    )
    logger.debug(f"Tiled {height}x{width} into {len(positions)} patches of {patch} (stride {stride})")
    return PatchGrid(
        patches=patches,
        positions=positions,
        scale=scale,
        overlap_fraction=overlap,
        source_height=height,
        source_width=width,
    )


def _stack_token_maps(token_maps: Union[torch.Tensor, Sequence[torch.Tensor]]) -> torch.Tensor:
    if isinstance(token_maps, torch.Tensor):
        return token_maps
    shapes = {tuple(t.shape) for t in token_maps}
    if len(shapes) != 1:
        raise InconsistentTokenDims(f"Patch token maps differ in shape: {sorted(shapes)}")
    return torch.stack(list(token_maps), dim=-4)


def _cell_centers(cells: int, factor: float, length: int, device) -> torch.Tensor:
    centers = (torch.arange(cells, dtype=torch.float64, device=device) + 0.5) * factor
    return centers.clamp(max=length - 0.5)


def merge_patch_tokens(
    token_maps: Union[torch.Tensor, Sequence[torch.Tensor]],
    grid: PatchGrid,
    level_tag: str = "patch_last",
) -> TokenGrid:
    """Stitch per-tile token maps into one grid over the tiled source.

    Args:
        token_maps: Tensor (..., N, dim, t, t) or a sequence of N tensors (..., dim, t, t).
        grid: The PatchGrid the maps were computed from.
        level_tag: Tag recorded on the result.

    Returns:
        TokenGrid of spatial size ceil(source / f) with f = P / t; its scale is
        relative to the original input, so half-scale grids report half the value.

    Raises:
        InconsistentTokenDims: If the maps differ in shape, are not square, or
            their count does not match the grid.
    """
    maps = _stack_token_maps(token_maps)
    if maps.dim() < 4 or maps.shape[-4] != grid.count:
        raise InconsistentTokenDims(
            f"Expected {grid.count} token maps, got tensor of shape {tuple(maps.shape)}"
        )
    tokens_h, tokens_w = int(maps.shape[-2]), int(maps.shape[-1])
    if tokens_h != tokens_w:
        raise InconsistentTokenDims(f"Token maps must be square, got {tokens_h}x{tokens_w}")

    patch = grid.patch_size
    factor = patch / tokens_h
    out_h = math.ceil(grid.source_height / factor)
    out_w = math.ceil(grid.source_width / factor)
    device = maps.device

    cy = _cell_centers(out_h, factor, grid.source_height, device)
    cx = _cell_centers(out_w, factor, grid.source_width, device)

    lead = maps.shape[:-4]
    dim = maps.shape[-3]
    merged = maps.new_zeros(*lead, dim, out_h, out_w)
    best = torch.full((out_h, out_w), math.inf, dtype=torch.float64, device=device)

    for index, (top, left) in enumerate(grid.positions):
        dy = cy - top
        dx = cx - left
        inside = ((dy >= 0) & (dy < patch))[:, None] & ((dx >= 0) & (dx < patch))[None, :]
        distance = (dy - patch / 2)[:, None] ** 2 + (dx - patch / 2)[None, :] ** 2
        update = inside & (distance < best)

        rows = torch.floor(dy / factor).long().clamp(0, tokens_h - 1)
        cols = torch.floor(dx / factor).long().clamp(0, tokens_w - 1)
        sampled = maps[..., index, :, :, :][..., rows[:, None], cols[None, :]]

        merged = torch.where(update, sampled, merged)
        best = torch.where(update, distance, best)

    source_scale = Fraction(1) if grid.scale == "full" else Fraction(1, 2)
    scale = source_scale * Fraction(tokens_h, patch)
    return TokenGrid(tokens=merged, scale=scale, level_tag=level_tag)
