"""Controlled swap-instance generation over rasterized 2-D scenes.

Four variants, each producing hard-negative pairs that differ only by one
attribute swap between two objects (or a count swap between two groups):

* color:    "a red cube and a blue sphere"  <->  colors exchanged
* size:     "a small cylinder and a large cube"  <->  sizes exchanged
* material: "a rubber cube and a metal sphere"  <->  materials exchanged
* quantity: "three spheres and two cubes"  <->  counts exchanged

Object positions are identical between the positive and negative scene, so
pixel differences stay confined to the swapped objects.  Two-object
variants place objects on a coarse 2x2 grid whose cells are each isolated
by some 112-crop of the lattice; quantity scenes scatter 4-10 objects on a
4x4 grid, which interleaves the two groups often enough to exercise
counting failure modes.  Everything is a pure function of (variant, seed).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .datasets import Manifest, load_manifest
from .errors import ConfigError
from .synthworld import (
    BACKGROUND_RGB,
    CANVAS_SIDE,
    COLORS,
    COUNT_WORDS,
    MATERIALS,
    NOUNS,
    shape_mask,
    stamp_object,
)
from .textseg import (
    GRANULARITIES,
    GroupCount,
    SceneGraph,
    SceneObject,
    SceneRelation,
    realize_caption,
    segments_from_scene_graph,
)

VARIANTS = ("color", "size", "material", "quantity")
_VARIANT_ID = {v: i + 1 for i, v in enumerate(VARIANTS)}

# Cell centers.  Each coarse cell sits inside one corner 112-crop of the
# lattice, so any object there has a guaranteed isolating crop.
_COARSE_CELLS = ((56, 56), (168, 56), (56, 168), (168, 168))
_FINE_AXIS = (28, 84, 140, 196)
_FINE_CELLS = tuple((x, y) for y in _FINE_AXIS for x in _FINE_AXIS)
# 2x2 blocks of the fine grid; each block also fits inside one 112-crop.
_QUADRANTS = tuple(
    tuple((x, y) for y in _FINE_AXIS[dy : dy + 2] for x in _FINE_AXIS[dx : dx + 2])
    for dy in (0, 2)
    for dx in (0, 2)
)

_QUANTITY_MIN = 2
_QUANTITY_MAX = 5

_SIZES_PAIR = ("small", "large")


@dataclass(frozen=True)
class PlacedObject:
    noun: str
    size_class: str
    center: tuple
    color: str | None = None
    material: str | None = None

    def bbox(self) -> tuple:
        mask = shape_mask(self.noun, self.size_class)
        h, w = mask.shape
        x0 = self.center[0] - w // 2
        y0 = self.center[1] - h // 2
        return (x0, y0, x0 + w, y0 + h)


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple
    canvas: int = CANVAS_SIDE

    def __post_init__(self):
        boxes = [obj.bbox() for obj in self.objects]
        for box in boxes:
            if box[0] < 0 or box[1] < 0 or box[2] > self.canvas or box[3] > self.canvas:
                raise ConfigError(f"object bbox {box} exceeds the canvas")
        for i, a in enumerate(boxes):
            for b in boxes[i + 1 :]:
                if a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]:
                    raise ConfigError("objects must not overlap in pixel space")


@dataclass(frozen=True)
class SwapInstanceSpec:
    variant: str
    seed: int
    positive: SceneSpec
    negative: SceneSpec
    positive_caption: str
    negative_caption: str
    positive_graph: SceneGraph
    negative_graph: SceneGraph
    gold_segments: dict = field(default_factory=dict)


def rasterize(scene: SceneSpec) -> np.ndarray:
    """Render a scene to an RGB canvas; see synthworld for the pixel code."""
    canvas = np.empty((scene.canvas, scene.canvas, 3), dtype=np.uint8)
    canvas[:] = BACKGROUND_RGB
    for obj in scene.objects:
        stamp_object(
            canvas,
            obj.center[0],
            obj.center[1],
            obj.noun,
            obj.color,
            obj.size_class,
            obj.material,
        )
    return canvas


def _two_object_graph(objects) -> SceneGraph:
    attrs = []
    for obj in objects:
        attr = obj.color or (obj.size_class if obj.size_class != "medium" else None) or obj.material
        attrs.append((attr,) if attr else ())
    graph_objects = tuple(
        SceneObject(id=f"o{i}", noun=obj.noun, attributes=attrs[i])
        for i, obj in enumerate(objects)
    )
    return SceneGraph(
        objects=graph_objects,
        relations=(SceneRelation(subject_id="o0", predicate="and", object_id="o1"),),
    )


def _quantity_graph(objects, nouns, counts) -> SceneGraph:
    graph_objects = tuple(
        SceneObject(id=f"o{i}", noun=obj.noun) for i, obj in enumerate(objects)
    )
    groups = tuple(
        GroupCount(count=COUNT_WORDS[count - 2], noun=noun)
        for noun, count in zip(nouns, counts)
    )
    return SceneGraph(objects=graph_objects, group_counts=groups)


def swap_attributes(scene: SceneSpec, variant: str) -> SceneSpec:
    """Exchange the variant attribute between the scene's two objects, or the
    group counts for quantity scenes.  Applying it twice is the identity."""
    if variant == "quantity":
        nouns = []
        for obj in scene.objects:
            if obj.noun not in nouns:
                nouns.append(obj.noun)
        first, second = nouns
        other = {first: second, second: first}
        # Exchanging the two groups' nouns in place swaps the counts while
        # every object keeps its position (and the layout its structure).
        swapped = tuple(
            PlacedObject(
                noun=other[obj.noun],
                size_class=obj.size_class,
                center=obj.center,
                color=obj.color,
                material=obj.material,
            )
            for obj in scene.objects
        )
        return SceneSpec(objects=swapped, canvas=scene.canvas)
    a, b = scene.objects
    if variant == "color":
        a2 = PlacedObject(a.noun, a.size_class, a.center, color=b.color, material=a.material)
        b2 = PlacedObject(b.noun, b.size_class, b.center, color=a.color, material=b.material)
    elif variant == "size":
        a2 = PlacedObject(a.noun, b.size_class, a.center, color=a.color, material=a.material)
        b2 = PlacedObject(b.noun, a.size_class, b.center, color=b.color, material=b.material)
    elif variant == "material":
        a2 = PlacedObject(a.noun, a.size_class, a.center, color=a.color, material=b.material)
        b2 = PlacedObject(b.noun, b.size_class, b.center, color=b.color, material=a.material)
    else:
        raise ConfigError(f"unknown swap variant {variant!r}")
    return SceneSpec(objects=(a2, b2), canvas=scene.canvas)


def generate_instance(variant: str, seed: int) -> SwapInstanceSpec:
    """Deterministically build one swap instance for (variant, seed)."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; pick one of {VARIANTS}")
    if seed < 0:
        raise ConfigError("seed must be non-negative")
    rng = np.random.default_rng([_VARIANT_ID[variant], seed])

    if variant == "quantity":
        noun_pick = rng.permutation(len(NOUNS))[:2]
        nouns = (NOUNS[noun_pick[0]], NOUNS[noun_pick[1]])
        # Two spatial regimes: clustered groups each sit in their own grid
        # quadrant (so an exact-count crop exists per group); interspersed
        # groups share the whole grid, where sub-crops with the wrong count
        # outcompete the exact group.
        clustered = bool(rng.integers(2))
        if clustered:
            counts = rng.permutation(np.arange(_QUANTITY_MIN, 5))[:2]
            n, m = int(counts[0]), int(counts[1])
            quads = rng.permutation(len(_QUADRANTS))[:2]
            cells = []
            for quad, count in zip(quads, (n, m)):
                pick = rng.permutation(4)[:count]
                cells += [_QUADRANTS[quad][p] for p in pick]
        else:
            counts = rng.permutation(np.arange(_QUANTITY_MIN, _QUANTITY_MAX + 1))[:2]
            n, m = int(counts[0]), int(counts[1])
            cell_pick = rng.permutation(len(_FINE_CELLS))[: n + m]
            cells = [_FINE_CELLS[idx] for idx in cell_pick]
        objects = tuple(
            PlacedObject(
                noun=nouns[0] if i < n else nouns[1],
                size_class="medium",
                center=cells[i],
            )
            for i in range(n + m)
        )
        positive = SceneSpec(objects=objects)
        negative = swap_attributes(positive, "quantity")
        pos_graph = _quantity_graph(positive.objects, nouns, (n, m))
        neg_graph = _quantity_graph(negative.objects, nouns, (m, n))
    else:
        cell_pick = rng.permutation(len(_COARSE_CELLS))[:2]
        cells = (_COARSE_CELLS[cell_pick[0]], _COARSE_CELLS[cell_pick[1]])
        noun_pick = rng.permutation(len(NOUNS))[:2]
        nouns = (NOUNS[noun_pick[0]], NOUNS[noun_pick[1]])
        if variant == "color":
            color_pick = rng.permutation(len(COLORS))[:2]
            colors = (COLORS[color_pick[0]], COLORS[color_pick[1]])
            sizes = ("medium", "medium")
            materials = (None, None)
        elif variant == "size":
            order = rng.permutation(2)
            sizes = (_SIZES_PAIR[order[0]], _SIZES_PAIR[order[1]])
            colors = (None, None)
            materials = (None, None)
        else:
            order = rng.permutation(2)
            materials = (MATERIALS[order[0]], MATERIALS[order[1]])
            colors = (None, None)
            sizes = ("medium", "medium")
        objects = tuple(
            PlacedObject(
                noun=nouns[i],
                size_class=sizes[i],
                center=cells[i],
                color=colors[i],
                material=materials[i],
            )
            for i in range(2)
        )
        positive = SceneSpec(objects=objects)
        negative = swap_attributes(positive, variant)
        pos_graph = _two_object_graph(positive.objects)
        neg_graph = _two_object_graph(negative.objects)

    gold = {}
    for granularity in GRANULARITIES:
        gold[granularity] = (
            segments_from_scene_graph(pos_graph, granularity).segments,
            segments_from_scene_graph(neg_graph, granularity).segments,
        )
    return SwapInstanceSpec(
        variant=variant,
        seed=seed,
        positive=positive,
        negative=negative,
        positive_caption=realize_caption(pos_graph),
        negative_caption=realize_caption(neg_graph),
        positive_graph=pos_graph,
        negative_graph=neg_graph,
        gold_segments=gold,
    )


def _graph_to_jsonable(graph: SceneGraph) -> dict:
    return {
        "objects": [
            {"id": o.id, "noun": o.noun, "attributes": list(o.attributes)}
            for o in graph.objects
        ],
        "relations": [
            {"subject_id": r.subject_id, "predicate": r.predicate, "object_id": r.object_id}
            for r in graph.relations
        ],
        "group_counts": [{"count": g.count, "noun": g.noun} for g in graph.group_counts],
    }


def emit_manifest(variant: str, n: int, seed: int, out_dir: str) -> Manifest:
    """Write ``n`` instances: PNGs, a datasets-compatible manifest JSONL, and
    a gold-segments JSONL sidecar.  Returns the reloaded manifest."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, f"{variant}.jsonl")
    gold_path = os.path.join(out_dir, f"{variant}_gold_segments.jsonl")

    with open(manifest_path, "w", encoding="utf-8") as mani, open(
        gold_path, "w", encoding="utf-8"
    ) as gold:
        for i in range(n):
            inst = generate_instance(variant, seed * 1_000_003 + i)
            inst_id = f"{variant}-{seed}-{i:04d}"
            pos_name = os.path.join("images", f"{inst_id}_pos.png")
            neg_name = os.path.join("images", f"{inst_id}_neg.png")
            Image.fromarray(rasterize(inst.positive)).save(os.path.join(out_dir, pos_name))
            Image.fromarray(rasterize(inst.negative)).save(os.path.join(out_dir, neg_name))
            record = {
                "id": inst_id,
                "image": pos_name,
                "caption": inst.positive_caption,
                "negative_image": neg_name,
                "negative_caption": inst.negative_caption,
                "segments": {
                    "positive": {g: list(inst.gold_segments[g][0]) for g in GRANULARITIES},
                    "negative": {g: list(inst.gold_segments[g][1]) for g in GRANULARITIES},
                },
                "scene_graph": _graph_to_jsonable(inst.positive_graph),
                "negative_scene_graph": _graph_to_jsonable(inst.negative_graph),
                "variant": variant,
                "seed": inst.seed,
            }
            mani.write(json.dumps(record) + "\n")
            for granularity in GRANULARITIES:
                gold.write(
                    json.dumps(
                        {
                            "id": inst_id,
                            "granularity": granularity,
                            "positive_segments": list(inst.gold_segments[granularity][0]),
                            "negative_segments": list(inst.gold_segments[granularity][1]),
                        }
                    )
                    + "\n"
                )
    return load_manifest(manifest_path, name=f"synthctrl-{variant}")
