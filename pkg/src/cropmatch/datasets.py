"""Bidirectional-retrieval dataset ingestion and the word-swap heuristic.

Manifests are JSONL, one instance per line, with four required keys::

    {"id": ..., "image": ..., "caption": ...,
     "negative_image": ..., "negative_caption": ...}

Image values are file paths (resolved against the manifest's directory) or
``base64:``-prefixed inline PNG/JPEG bytes.  Optional keys ride along
untouched: ``segments`` ({"positive"|"negative" -> {granularity ->
[...]}}) and ``scene_graph``/``negative_scene_graph`` dictionaries.
"""

from __future__ import annotations

import base64
import io
import json
import os
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import DataError

REQUIRED_KEYS = ("id", "image", "caption", "negative_image", "negative_caption")

_PUNCT_RE = re.compile(r"[^\w\s]")


@dataclass
class BidirInstance:
    id: str
    image: str
    caption: str
    negative_image: str
    negative_caption: str
    segments: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        record = {
            "id": self.id,
            "image": self.image,
            "caption": self.caption,
            "negative_image": self.negative_image,
            "negative_caption": self.negative_caption,
        }
        if self.segments:
            record["segments"] = self.segments
        record.update(self.extra)
        return record

    def segments_for(self, side: str, granularity: str):
        granmap = self.segments.get(side)
        if not granmap:
            return None
        segs = granmap.get(granularity)
        return list(segs) if segs else None


@dataclass
class Manifest:
    name: str
    instances: list
    base_dir: str = ""
    source_notes: str = ""

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def load_image(self, ref: str) -> np.ndarray:
        return load_image_ref(ref, self.base_dir)


def load_image_ref(ref: str, base_dir: str = "") -> np.ndarray:
    """Decode an image reference to an RGB uint8 array."""
    try:
        if ref.startswith("base64:"):
            raw = base64.b64decode(ref[len("base64:") :])
            pil = Image.open(io.BytesIO(raw))
        else:
            path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
            pil = Image.open(path)
        return np.asarray(pil.convert("RGB"))
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"cannot decode image reference {ref!r}: {exc}") from exc


def load_manifest(path: str, name: str | None = None) -> Manifest:
    instances = []
    seen_ids = set()
    if not os.path.exists(path):
        raise DataError(f"manifest file {path!r} does not exist")
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: not valid JSON: {exc}") from exc
            instance_id = record.get("id", f"<line {line_no}>")
            for key in REQUIRED_KEYS:
                if key not in record:
                    raise DataError(
                        f"{path}:{line_no}: instance {instance_id!r} is missing key {key!r}"
                    )
            if record["id"] in seen_ids:
                raise DataError(f"{path}:{line_no}: duplicate instance id {record['id']!r}")
            seen_ids.add(record["id"])
            extra = {
                k: v for k, v in record.items() if k not in REQUIRED_KEYS + ("segments",)
            }
            instances.append(
                BidirInstance(
                    id=str(record["id"]),
                    image=record["image"],
                    caption=record["caption"],
                    negative_image=record["negative_image"],
                    negative_caption=record["negative_caption"],
                    segments=record.get("segments", {}),
                    extra=extra,
                )
            )
    return Manifest(
        name=name or os.path.splitext(os.path.basename(path))[0],
        instances=instances,
        base_dir=os.path.dirname(os.path.abspath(path)),
    )


def save_manifest(manifest: Manifest, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in manifest.instances:
            fh.write(json.dumps(inst.to_record()) + "\n")


def normalize_words(text: str) -> list:
    return _PUNCT_RE.sub(" ", text.lower()).split()


def is_swap_pair(a: str, b: str) -> bool:
    """True when two captions use exactly the same words in a different
    arrangement.  Identical captions (after normalization) are not swaps.
    Necessary, not sufficient: candidates still need semantic vetting."""
    if not a or not b:
        raise DataError("is_swap_pair needs non-empty strings")
    words_a = normalize_words(a)
    words_b = normalize_words(b)
    return Counter(words_a) == Counter(words_b) and words_a != words_b
