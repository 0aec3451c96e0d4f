"""Controlled-scene vocabulary, pixel encoding, and exact decoding.

Scenes are flat-shaded 2-D rasters of simple primitives (square, circle,
capsule).  Every object is painted with an RGB fill whose high bits carry a
palette hue and whose low three bits per channel encode the object class:

* R low bits: noun (1=cube, 2=sphere, 3=cylinder; 0 = not an object)
* G low bits: size class (0=medium, 1=small, 2=large)
* B low bits: material (0=none, 1=rubber, 2=metal)

Metal objects are hatched with a darkened shade of the same fill carrying
identical class bits, so the texture is visible while decoding stays exact
and each object remains a single connected component.  Because encode and
decode share this module, the synthetic embedding oracles are pure
functions of pixel content: any crop of any generated scene decodes to the
exact multiset of visible objects, their attributes, visible pixel counts
and visible bounding boxes.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

NOUNS = ("cube", "sphere", "cylinder")
COLORS = ("red", "blue", "green", "yellow", "purple", "cyan")
SIZES = ("small", "large")
MATERIALS = ("rubber", "metal")
COUNT_WORDS = ("two", "three", "four", "five", "six", "seven", "eight", "nine", "ten")

CANVAS_SIDE = 224
BACKGROUND_RGB = (255, 255, 255)

# Render radii per size class; object extent (bounding-box long side) is 2r.
RADIUS = {"small": 18, "medium": 25, "large": 44}

_NOUN_BITS = {"cube": 1, "sphere": 2, "cylinder": 3}
_SIZE_BITS = {"medium": 0, "small": 1, "large": 2}
_MATERIAL_BITS = {None: 0, "rubber": 1, "metal": 2}

# Palette hues; every channel value is a multiple of 8 so the low bits are
# free for the class code.  None keys the neutral (caption-silent) hue.
_BASE_RGB = {
    "red": (224, 32, 32),
    "blue": (32, 32, 224),
    "green": (32, 160, 32),
    "yellow": (224, 224, 32),
    "purple": (160, 32, 224),
    "cyan": (32, 224, 224),
    None: (128, 128, 128),
}
_DARK_RGB = {name: tuple((c // 2) & ~7 for c in rgb) for name, rgb in _BASE_RGB.items()}

_HATCH_PERIOD = 8
_HATCH_ON = 4

_COLOR_BY_BASE = {rgb: name for name, rgb in _BASE_RGB.items()}
_COLOR_BY_DARK = {rgb: name for name, rgb in _DARK_RGB.items()}
assert len(_COLOR_BY_BASE) == len(_BASE_RGB)
assert len(_COLOR_BY_DARK) == len(_DARK_RGB)
assert not set(_COLOR_BY_BASE) & set(_COLOR_BY_DARK)

_NOUN_BY_BIT = {v: k for k, v in _NOUN_BITS.items()}
_SIZE_BY_BIT = {v: k for k, v in _SIZE_BITS.items()}
_MATERIAL_BY_BIT = {v: k for k, v in _MATERIAL_BITS.items()}


@dataclass(frozen=True, order=True)
class ObjectClass:
    """Decoded attribute bundle of one object fill."""

    noun: str
    color: str | None
    size_class: str
    material: str | None


@dataclass(frozen=True)
class VisibleObject:
    """One object instance as seen inside a crop."""

    klass: ObjectClass
    pixel_count: int
    full_count: int
    vis_w: int
    vis_h: int

    @property
    def visible_fraction(self) -> float:
        return self.pixel_count / self.full_count


@lru_cache(maxsize=None)
def shape_mask(noun: str, size_class: str) -> np.ndarray:
    """Boolean stamp of the primitive; bbox long side is 2 * radius."""
    r = RADIUS[size_class]
    if noun == "cube":
        return np.ones((2 * r, 2 * r), dtype=bool)
    if noun == "sphere":
        yy, xx = np.mgrid[0 : 2 * r, 0 : 2 * r]
        c = r - 0.5
        return (xx - c) ** 2 + (yy - c) ** 2 <= r * r
    if noun == "cylinder":
        # Vertical capsule: rectangle of width r with semicircular caps.
        w, h = r, 2 * r
        cap = w / 2.0
        yy, xx = np.mgrid[0:h, 0:w]
        cx = (w - 1) / 2.0
        body = (yy >= cap) & (yy < h - cap)
        top = (xx - cx) ** 2 + (yy - (cap - 0.5)) ** 2 <= cap * cap
        bottom = (xx - cx) ** 2 + (yy - (h - cap - 0.5)) ** 2 <= cap * cap
        return body | top | bottom
    raise ValueError(f"unknown noun {noun!r}")


@lru_cache(maxsize=None)
def nominal_pixel_count(noun: str, size_class: str) -> int:
    return int(shape_mask(noun, size_class).sum())


def encode_fill(
    noun: str, color: str | None, size_class: str, material: str | None, dark: bool = False
) -> tuple:
    base = (_DARK_RGB if dark else _BASE_RGB)[color]
    r = (base[0] & ~7) | _NOUN_BITS[noun]
    g = (base[1] & ~7) | _SIZE_BITS[size_class]
    b = (base[2] & ~7) | _MATERIAL_BITS[material]
    return (r, g, b)


def decode_fill(r: int, g: int, b: int) -> ObjectClass | None:
    noun = _NOUN_BY_BIT.get(r & 7)
    if noun is None:
        return None
    base = (r & ~7, g & ~7, b & ~7)
    if base in _COLOR_BY_BASE:
        color = _COLOR_BY_BASE[base]
    elif base in _COLOR_BY_DARK:
        color = _COLOR_BY_DARK[base]
    else:
        return None
    if (g & 7) not in _SIZE_BY_BIT or (b & 7) not in _MATERIAL_BY_BIT:
        return None
    return ObjectClass(
        noun=noun,
        color=color,
        size_class=_SIZE_BY_BIT[g & 7],
        material=_MATERIAL_BY_BIT[b & 7],
    )


def stamp_object(
    canvas: np.ndarray,
    center_x: int,
    center_y: int,
    noun: str,
    color: str | None,
    size_class: str,
    material: str | None,
) -> None:
    """Paint one object onto a canvas, hatching metal fills."""
    mask = shape_mask(noun, size_class)
    h, w = mask.shape
    x0 = center_x - w // 2
    y0 = center_y - h // 2
    if x0 < 0 or y0 < 0 or y0 + h > canvas.shape[0] or x0 + w > canvas.shape[1]:
        raise ValueError(f"object at ({center_x}, {center_y}) exceeds canvas bounds")
    fill = encode_fill(noun, color, size_class, material)
    region = canvas[y0 : y0 + h, x0 : x0 + w]
    region[mask] = fill
    if material == "metal":
        yy, xx = np.mgrid[0:h, 0:w]
        stripes = ((yy + xx) % _HATCH_PERIOD) < _HATCH_ON
        dark = encode_fill(noun, color, size_class, material, dark=True)
        region[mask & stripes] = dark


def _packed(image: np.ndarray) -> np.ndarray:
    rgb = image[:, :, :3].astype(np.int32)
    return (rgb[:, :, 0] << 16) | (rgb[:, :, 1] << 8) | rgb[:, :, 2]


def _decode_code(code: int) -> ObjectClass | None:
    return decode_fill((code >> 16) & 255, (code >> 8) & 255, code & 255)


def _class_masks(image: np.ndarray):
    """Yield (ObjectClass, boolean mask) pairs, merging base and dark shades."""
    packed = _packed(image)
    classes: dict[ObjectClass, list[int]] = {}
    for code in np.unique(packed).tolist():
        klass = _decode_code(code)
        if klass is not None:
            classes.setdefault(klass, []).append(code)
    for klass in sorted(classes):
        codes = classes[klass]
        if len(codes) == 1:
            mask = packed == codes[0]
        else:
            mask = np.isin(packed, codes)
        yield klass, mask


def decode_objects(crop: np.ndarray) -> list:
    """Decode every object instance visible in a pixel buffer.

    Instances sharing a fill (e.g. several identical spheres) are separated
    by connected-component labelling; primitives are convex, so a cropped
    instance stays one component.
    """
    if crop.ndim != 3 or crop.shape[2] < 3:
        return []
    out = []
    for klass, mask in _class_masks(crop):
        labels, n_comp = ndimage.label(mask)
        full = nominal_pixel_count(klass.noun, klass.size_class)
        for comp in range(1, n_comp + 1):
            ys, xs = np.nonzero(labels == comp)
            out.append(
                VisibleObject(
                    klass=klass,
                    pixel_count=int(ys.size),
                    full_count=full,
                    vis_w=int(xs.max() - xs.min() + 1),
                    vis_h=int(ys.max() - ys.min() + 1),
                )
            )
    return out


class SceneIndex:
    """Per-image acceleration structure for repeated crop decoding.

    Decodes the full image once, then answers ``visible_objects`` for any
    crop box from per-instance summed-area tables.  Results are identical
    to running :func:`decode_objects` on the extracted crop pixels.
    """

    def __init__(self, image: np.ndarray):
        self.height, self.width = image.shape[:2]
        self.classes: list[ObjectClass] = []
        self.totals: list[int] = []
        self.full_counts: list[int] = []
        self.bboxes: list[tuple] = []
        integrals = []
        if image.ndim == 3 and image.shape[2] >= 3:
            for klass, mask in _class_masks(image):
                labels, n_comp = ndimage.label(mask)
                full = nominal_pixel_count(klass.noun, klass.size_class)
                for comp in range(1, n_comp + 1):
                    inst = labels == comp
                    ys, xs = np.nonzero(inst)
                    table = np.zeros((self.height + 1, self.width + 1), dtype=np.int32)
                    table[1:, 1:] = inst.cumsum(axis=0).cumsum(axis=1)
                    integrals.append(table)
                    self.classes.append(klass)
                    self.totals.append(int(ys.size))
                    self.full_counts.append(full)
                    self.bboxes.append(
                        (int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
                    )
        self.integrals = integrals

    def _count(self, table: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> int:
        return int(table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0])

    def visible_objects(self, x: int, y: int, w: int, h: int) -> list:
        x0, y0, x1, y1 = x, y, x + w, y + h
        out = []
        for idx, table in enumerate(self.integrals):
            bx0, by0, bx1, by1 = self.bboxes[idx]
            if bx1 < x0 or bx0 >= x1 or by1 < y0 or by0 >= y1:
                continue
            count = self._count(table, x0, y0, x1, y1)
            if count == 0:
                continue
            if count == self.totals[idx]:
                vis_w = bx1 - bx0 + 1
                vis_h = by1 - by0 + 1
            else:
                cols = (table[y1, x0 + 1 : x1 + 1] - table[y1, x0:x1]) - (
                    table[y0, x0 + 1 : x1 + 1] - table[y0, x0:x1]
                )
                rows = (table[y0 + 1 : y1 + 1, x1] - table[y0:y1, x1]) - (
                    table[y0 + 1 : y1 + 1, x0] - table[y0:y1, x0]
                )
                nz_c = np.nonzero(cols)[0]
                nz_r = np.nonzero(rows)[0]
                vis_w = int(nz_c[-1] - nz_c[0] + 1)
                vis_h = int(nz_r[-1] - nz_r[0] + 1)
            out.append(
                VisibleObject(
                    klass=self.classes[idx],
                    pixel_count=count,
                    full_count=self.full_counts[idx],
                    vis_w=vis_w,
                    vis_h=vis_h,
                )
            )
        return out
