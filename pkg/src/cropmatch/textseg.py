"""Text segmentation: scene-graph realization and LLM-backed decomposition.

Three granularities share the same relational segment and differ in how
much per-object detail they add:

* coarse: one segment per object carrying all its attributes, plus the
  relational segment(s);
* mid: coarse plus single-attribute combinations for multi-attribute
  objects;
* fine: mid plus each bare object noun.

Controlled scenes come with ground-truth scene graphs and use the
deterministic realizer here.  Natural captions go through an external
language model filled into one of three prompt templates (fixed decoding:
temperature 0.0, top_k 1); responses are persisted in a content-addressed
replay store so evaluation runs are reproducible and offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from importlib import resources

from .errors import DataError, SegmentParseError, SegmentationError, TransportError

GRANULARITIES = ("fine", "mid", "coarse")

_ARTICLES = frozenset({"a", "an", "the"})


@dataclass(frozen=True)
class SceneObject:
    id: str
    noun: str
    attributes: tuple = ()


@dataclass(frozen=True)
class SceneRelation:
    subject_id: str
    predicate: str
    object_id: str


@dataclass(frozen=True)
class GroupCount:
    count: str
    noun: str


@dataclass(frozen=True)
class SceneGraph:
    objects: tuple = ()
    relations: tuple = ()
    group_counts: tuple = ()

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise DataError("scene graph object ids must be unique")
        known = set(ids)
        for rel in self.relations:
            if rel.subject_id not in known or rel.object_id not in known:
                raise DataError(f"relation {rel} references unknown object id")

    def object_by_id(self, obj_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.id == obj_id:
                return obj
        raise KeyError(obj_id)


@dataclass(frozen=True)
class SegmentSet:
    caption: str
    granularity: str
    segments: tuple
    provenance: str = "scene_graph"

    def __post_init__(self):
        if not self.segments or any(not s for s in self.segments):
            raise SegmentationError("segment set must contain non-empty segments")


def _dedup(items) -> tuple:
    seen = set()
    out = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return tuple(out)


def _full_phrase(obj: SceneObject) -> str:
    return " ".join(list(obj.attributes) + [obj.noun])


def _pluralize(noun: str) -> str:
    return noun + "s"


def _relation_phrase(graph: SceneGraph, relation: SceneRelation) -> str:
    subject = _full_phrase(graph.object_by_id(relation.subject_id))
    obj = _full_phrase(graph.object_by_id(relation.object_id))
    if relation.predicate == "and":
        return f"{subject} and a {obj}"
    return f"{subject} {relation.predicate} {obj}"


def realize_caption(graph: SceneGraph) -> str:
    """Deterministic caption surface for a controlled scene graph."""
    if graph.group_counts:
        parts = [f"{g.count} {_pluralize(g.noun)}" for g in graph.group_counts]
        return " and ".join(parts)
    if graph.relations:
        rel = graph.relations[0]
        subject = _full_phrase(graph.object_by_id(rel.subject_id))
        obj = _full_phrase(graph.object_by_id(rel.object_id))
        if rel.predicate == "and":
            return f"a {subject} and a {obj}"
        return f"a {subject} {rel.predicate} {obj}"
    return "a " + _full_phrase(graph.objects[0])


def segments_from_scene_graph(graph: SceneGraph, granularity: str) -> SegmentSet:
    """Realize ordered text segments for a scene graph at one granularity."""
    if granularity not in GRANULARITIES:
        raise SegmentationError(f"unknown granularity {granularity!r}")
    if not graph.objects and not graph.group_counts:
        raise SegmentationError("cannot segment an empty scene graph")

    segments = []
    if graph.group_counts:
        if granularity == "fine":
            segments += [_pluralize(g.noun) for g in graph.group_counts]
        segments += [f"{g.count} {_pluralize(g.noun)}" for g in graph.group_counts]
        segments.append(
            " and ".join(f"{g.count} {_pluralize(g.noun)}" for g in graph.group_counts)
        )
        return SegmentSet(
            caption=realize_caption(graph),
            granularity=granularity,
            segments=_dedup(segments),
        )

    if granularity == "fine":
        segments += [obj.noun for obj in graph.objects]
    for obj in graph.objects:
        if granularity in ("fine", "mid") and len(obj.attributes) > 1:
            segments += [f"{attr} {obj.noun}" for attr in obj.attributes]
        segments.append(_full_phrase(obj))
    for relation in graph.relations:
        segments.append(_relation_phrase(graph, relation))
    return SegmentSet(
        caption=realize_caption(graph),
        granularity=granularity,
        segments=_dedup(segments),
    )


# --------------------------------------------------------------------------
# Segment-pair validation heuristics


@dataclass
class ValidationReport:
    count_mismatch: bool
    missing_tokens: tuple
    hallucinated_tokens: tuple

    @property
    def clean(self) -> bool:
        return not (self.count_mismatch or self.missing_tokens or self.hallucinated_tokens)


def _caption_tokens(text: str) -> set:
    tokens = re.sub(r"[^\w\s]", " ", text.lower()).split()
    return {t for t in tokens if t not in _ARTICLES}


def validate_segments(caption: str, segments) -> tuple:
    """(missing, hallucinated) token sets for one caption/segments pair."""
    cap = _caption_tokens(caption)
    seg = set()
    for segment in segments:
        seg |= _caption_tokens(segment)
    return tuple(sorted(cap - seg)), tuple(sorted(seg - cap))


def validate_segment_pair(pos: SegmentSet, neg: SegmentSet) -> ValidationReport:
    """Flag likely-wrong segmentations of a positive/negative caption pair."""
    missing_pos, halluc_pos = validate_segments(pos.caption, pos.segments)
    missing_neg, halluc_neg = validate_segments(neg.caption, neg.segments)
    return ValidationReport(
        count_mismatch=len(pos.segments) != len(neg.segments),
        missing_tokens=tuple(sorted(set(missing_pos) | set(missing_neg))),
        hallucinated_tokens=tuple(sorted(set(halluc_pos) | set(halluc_neg))),
    )


# --------------------------------------------------------------------------
# LLM-backed segmentation

DECODING = {"temperature": 0.0, "top_k": 1}


def load_template(granularity: str) -> str:
    if granularity not in GRANULARITIES:
        raise SegmentationError(f"no template for granularity {granularity!r}")
    ref = resources.files("cropmatch").joinpath(f"templates/{granularity}.txt")
    return ref.read_text(encoding="utf-8")


def build_prompt(caption: str, granularity: str) -> str:
    return load_template(granularity).rstrip() + f' "{caption}"'


_LIST_RE = re.compile(r"\[(.*?)\]", re.DOTALL)


def parse_segment_list(raw_text: str) -> list:
    """Parse a model response into segments.

    Accepts a JSON-ish bracketed array (with or without the
    ``"text_segments"`` key, tolerating a trailing comma) or a plain list
    of lines, optionally bulleted.  A present-but-malformed array raises;
    no list structure at all parses as empty.
    """
    match = _LIST_RE.search(raw_text)
    if match:
        body = "[" + match.group(1).strip().rstrip(",") + "]"
        try:
            items = json.loads(body)
        except json.JSONDecodeError as exc:
            raise SegmentParseError(
                f"bracketed segment list is not valid JSON: {exc}", raw_text=raw_text
            ) from exc
        if not isinstance(items, list) or not all(isinstance(i, str) for i in items):
            raise SegmentParseError("segment array must hold strings", raw_text=raw_text)
        return [i.strip() for i in items if i.strip()]
    items = []
    for line in raw_text.splitlines():
        line = line.strip().lstrip("-*").strip()
        if not line or line.endswith(":") or line.startswith("text_segments"):
            continue
        items.append(line.strip('"').strip())
    return [i for i in items if i]


class ReplayStore:
    """JSONL store of raw responses keyed by (template_id, caption hash).

    Concurrent reads are safe after load; writes serialize on a lock and
    append to disk so parallel runs never lose records.
    """

    def __init__(self, path=None):
        self.path = path
        self._records = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._records[rec["key"]] = rec

    @staticmethod
    def key_for(template_id: str, caption: str) -> str:
        digest = hashlib.sha256(caption.encode("utf-8")).hexdigest()
        return f"{template_id}:{digest}"

    def get(self, template_id: str, caption: str):
        return self._records.get(self.key_for(template_id, caption))

    def put(self, template_id: str, caption: str, raw_text: str, parsed_segments) -> None:
        key = self.key_for(template_id, caption)
        record = {
            "key": key,
            "raw_text": raw_text,
            "parsed_segments": list(parsed_segments),
        }
        with self._lock:
            self._records[key] = record
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record) + "\n")

    def __len__(self):
        return len(self._records)


class HttpLlmClient:
    """POSTs {template_id, caption, temperature, top_k}; expects raw_text back."""

    def __init__(self, url: str, session=None, timeout: float = 120.0):
        import requests

        self.url = url
        self.session = session or requests.Session()
        self.timeout = timeout

    def complete(self, template_id: str, caption: str) -> str:
        body = {"template_id": template_id, "caption": caption, **DECODING}
        try:
            resp = self.session.post(self.url, json=body, timeout=self.timeout)
        except Exception as exc:
            raise TransportError(f"segmentation service request failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"segmentation service returned HTTP {resp.status_code}")
        payload = resp.json()
        return payload.get("raw_text", payload.get("text", ""))


class ReplayLlmClient:
    """Serves recorded responses; optionally falls through to an inner client
    and records what it returns."""

    def __init__(self, store: ReplayStore, inner=None):
        self.store = store
        self.inner = inner

    def complete(self, template_id: str, caption: str) -> str:
        record = self.store.get(template_id, caption)
        if record is not None:
            return record["raw_text"]
        if self.inner is None:
            raise TransportError(
                f"no recorded response for template {template_id!r} and this caption"
            )
        raw = self.inner.complete(template_id, caption)
        self.store.put(template_id, caption, raw, parse_segment_list(raw))
        return raw


def segments_from_llm(caption: str, granularity: str, client) -> SegmentSet:
    """Decompose a natural caption via a language-model client.

    An empty parse is not an error: the caption itself becomes the single
    segment, reducing scoring to the plain whole-input comparison.
    """
    if not caption or not caption.strip():
        raise DataError("caption must be a non-empty string")
    if granularity not in GRANULARITIES:
        raise SegmentationError(f"unknown granularity {granularity!r}")
    raw_text = client.complete(granularity, caption)
    segments = _dedup(parse_segment_list(raw_text))
    if not segments:
        return SegmentSet(
            caption=caption,
            granularity=granularity,
            segments=(caption,),
            provenance="fallback_full_caption",
        )
    return SegmentSet(
        caption=caption, granularity=granularity, segments=segments, provenance="llm"
    )
