"""Deterministic crop lattices over a square working resolution.

A lattice is the full set of rectangular crops produced by sliding each
configured crop size over the image at a fixed stride: the stride equals
the crop size in ``grid`` mode (no same-size overlap) and half the crop
size in ``overlap`` mode.  Crops that would overhang the image boundary
are dropped, never clipped.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import ConfigError, DataError

WORKING_SIDE = 224

# Six scale/aspect combinations used as the default lattice vocabulary.
# At side 224 they yield 86 crops in grid mode and 270 in overlap mode.
DEFAULT_CROP_SIZES = (
    (32, 32),
    (56, 56),
    (112, 112),
    (224, 224),
    (56, 112),
    (112, 56),
)

GRID = "grid"
OVERLAP = "overlap"


@dataclass(frozen=True)
class CropBox:
    """Rectangle in pixel coordinates: left, top, width, height."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ConfigError(f"crop origin must be non-negative, got {self}")
        if self.w < 1 or self.h < 1:
            raise ConfigError(f"crop must be at least 1x1, got {self}")

    @property
    def right(self) -> int:
        return self.x + self.w

    @property
    def bottom(self) -> int:
        return self.y + self.h

    def within(self, width: int, height: int) -> bool:
        return self.right <= width and self.bottom <= height


@dataclass(frozen=True)
class CropConfig:
    sizes: tuple = DEFAULT_CROP_SIZES
    mode: str = GRID
    image_side: int = WORKING_SIDE

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple((int(w), int(h)) for w, h in self.sizes))
        if self.mode not in (GRID, OVERLAP):
            raise ConfigError(f"unknown crop mode {self.mode!r}")
        if not self.sizes:
            raise ConfigError("sizes list must be non-empty")
        if len(set(self.sizes)) != len(self.sizes):
            raise ConfigError("sizes list must be duplicate-free")
        for w, h in self.sizes:
            if w < 1 or h < 1:
                raise ConfigError(f"crop size must be positive, got ({w}, {h})")
            if w > self.image_side or h > self.image_side:
                raise ConfigError(
                    f"crop size ({w}, {h}) exceeds image side {self.image_side}"
                )
            if self.mode == OVERLAP and (w % 2 or h % 2):
                raise ConfigError(
                    f"overlap mode needs even sizes for an integral stride, got ({w}, {h})"
                )

    def stride_for(self, size) -> tuple:
        w, h = size
        if self.mode == GRID:
            return w, h
        return w // 2, h // 2


@dataclass
class CropLattice:
    """Ordered, duplicate-free set of crops for one configuration.

    Ordering is deterministic: size-list index first, then y, then x, so
    repeated generation yields identical lattices and downstream caches and
    tie-breaks are stable.
    """

    crops: list = field(default_factory=list)
    config: CropConfig = field(default_factory=CropConfig)
    source_id: str = ""

    def __len__(self):
        return len(self.crops)

    def __iter__(self):
        return iter(self.crops)

    def size_index(self, box: CropBox) -> int:
        return self.config.sizes.index((box.w, box.h))


def generate_lattice(config: CropConfig, source_id: str = "") -> CropLattice:
    """Enumerate every in-bounds crop on the stride lattice of each size."""
    side = config.image_side
    crops = []
    for w, h in config.sizes:
        sw, sh = config.stride_for((w, h))
        for y in range(0, side - h + 1, sh):
            for x in range(0, side - w + 1, sw):
                crops.append(CropBox(x, y, w, h))
    # Rectangular sizes and their transposes can never collide because the
    # (w, h) pair is part of the box; identical (w, h) entries are rejected
    # by CropConfig, so the list is duplicate-free by construction.
    return CropLattice(crops=crops, config=config, source_id=source_id)


def extract_crop(image: np.ndarray, box: CropBox) -> np.ndarray:
    """Return the exact pixel sub-rectangle for ``box``; no resampling."""
    if image.ndim < 2:
        raise DataError("image must be at least 2-D (H, W[, C])")
    height, width = image.shape[:2]
    if not box.within(width, height):
        raise DataError(
            f"crop {box} exceeds image bounds {width}x{height}"
        )
    return image[box.y : box.bottom, box.x : box.right].copy()


def full_image_box(image: np.ndarray) -> CropBox:
    height, width = image.shape[:2]
    return CropBox(0, 0, width, height)


def to_working_resolution(image: np.ndarray, side: int = WORKING_SIDE) -> np.ndarray:
    """Resize the shorter side to ``side`` (bicubic) and center-crop to a square.

    Images already at side x side are returned unchanged so synthetic
    rasters round-trip exactly.
    """
    height, width = image.shape[:2]
    if height == side and width == side:
        return image
    pil = Image.fromarray(image)
    scale = side / min(width, height)
    new_w = max(side, int(round(width * scale)))
    new_h = max(side, int(round(height * scale)))
    pil = pil.resize((new_w, new_h), Image.BICUBIC)
    left = (new_w - side) // 2
    top = (new_h - side) // 2
    pil = pil.crop((left, top, left + side, top + side))
    return np.asarray(pil)


def image_content_id(image: np.ndarray) -> str:
    """Content hash identifying a pixel buffer (used as lattice source id)."""
    digest = hashlib.sha256()
    digest.update(str(image.shape).encode())
    digest.update(np.ascontiguousarray(image).tobytes())
    return digest.hexdigest()


def lattice_to_csv(lattice: CropLattice, fileobj) -> None:
    """Dump one row per crop: index, size_index, x, y, w, h."""
    writer = csv.writer(fileobj)
    writer.writerow(["index", "size_index", "x", "y", "w", "h"])
    for i, box in enumerate(lattice.crops):
        writer.writerow([i, lattice.size_index(box), box.x, box.y, box.w, box.h])


def lattice_csv_string(lattice: CropLattice) -> str:
    buf = io.StringIO()
    lattice_to_csv(lattice, buf)
    return buf.getvalue()
