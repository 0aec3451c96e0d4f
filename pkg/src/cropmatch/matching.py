"""Crop x segment similarity matrices, argmax matching, and score aggregation.

The aggregate image-text score is the arithmetic mean, over text segments,
of each segment's best crop similarity.  Ties between crops break toward
the lowest crop index; several segments may share a crop.  The whole-image
vs whole-caption cosine is carried alongside as the baseline score.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import CropConfig, full_image_box, generate_lattice


@dataclass
class SimilarityMatrix:
    """values[i][j] = cosine(crop i, segment j)."""

    values: np.ndarray
    crop_index: list = field(default_factory=list)
    segment_index: list = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("similarity matrix must be 2-D (crops x segments)")
        if self.crop_index and len(self.crop_index) != self.values.shape[0]:
            raise DataError("crop index length does not match matrix rows")
        if self.segment_index and len(self.segment_index) != self.values.shape[1]:
            raise DataError("segment index length does not match matrix columns")

    @property
    def n_crops(self) -> int:
        return self.values.shape[0]

    @property
    def n_segments(self) -> int:
        return self.values.shape[1]


@dataclass
class Match:
    segment_index: int
    crop_index: int
    similarity: float


@dataclass
class MatchReport:
    matches: list
    ita_score: float
    baseline_score: float | None = None
    segments: list = field(default_factory=list)
    crops: list = field(default_factory=list)

    def match_for(self, segment: str) -> Match:
        return self.matches[self.segments.index(segment)]

    def to_jsonable(self) -> dict:
        out = {
            "segments": list(self.segments),
            "matches": [],
            "ita_score": self.ita_score,
            "baseline_score": self.baseline_score,
        }
        for match in self.matches:
            entry = {
                "segment": self.segments[match.segment_index]
                if self.segments
                else match.segment_index,
                "sim": match.similarity,
            }
            if self.crops:
                box = self.crops[match.crop_index]
                entry["crop"] = {"x": box.x, "y": box.y, "w": box.w, "h": box.h}
            else:
                entry["crop"] = match.crop_index
            out["matches"].append(entry)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), indent=2)


def similarity_matrix(crop_vecs, segment_vecs, crops=None, segments=None) -> SimilarityMatrix:
    """Pairwise cosine matrix for unit-or-not vector stacks."""
    crop_vecs = np.asarray(crop_vecs, dtype=np.float64)
    segment_vecs = np.asarray(segment_vecs, dtype=np.float64)
    if crop_vecs.ndim != 2 or segment_vecs.ndim != 2 or crop_vecs.size == 0 or segment_vecs.size == 0:
        raise DataError("similarity_matrix needs non-empty 2-D vector stacks")
    if crop_vecs.shape[1] != segment_vecs.shape[1]:
        raise DataError(
            f"vector dimensions differ: {crop_vecs.shape[1]} vs {segment_vecs.shape[1]}"
        )
    crop_norms = np.linalg.norm(crop_vecs, axis=1, keepdims=True)
    seg_norms = np.linalg.norm(segment_vecs, axis=1, keepdims=True)
    if np.any(crop_norms == 0) or np.any(seg_norms == 0):
        raise DataError("zero vector in similarity_matrix input")
    values = (crop_vecs / crop_norms) @ (segment_vecs / seg_norms).T
    return SimilarityMatrix(
        values=values,
        crop_index=list(crops) if crops is not None else [],
        segment_index=list(segments) if segments is not None else [],
    )


def best_matches(matrix: SimilarityMatrix) -> MatchReport:
    """Select the argmax crop per segment and average the match similarities."""
    values = matrix.values
    if values.shape[0] < 1 or values.shape[1] < 1:
        raise DataError("best_matches needs at least one crop and one segment")
    winners = np.argmax(values, axis=0)  # first occurrence = lowest crop index
    sims = [float(values[winners[j], j]) for j in range(values.shape[1])]
    matches = [
        Match(segment_index=j, crop_index=int(winners[j]), similarity=sims[j])
        for j in range(values.shape[1])
    ]
    # fsum keeps the mean exactly permutation-invariant.
    ita = math.fsum(sims) / len(sims)
    return MatchReport(
        matches=matches,
        ita_score=ita,
        segments=list(matrix.segment_index),
        crops=list(matrix.crop_index),
    )


def ita_similarity(image, caption, crop_config, segment_set, provider) -> MatchReport:
    """Full pipeline for one image/caption pair.

    Generates the lattice, embeds crops and segments, matches, aggregates;
    also computes the whole-image/whole-caption baseline cosine.
    """
    from .textseg import SegmentSet

    segments = (
        list(segment_set.segments)
        if isinstance(segment_set, SegmentSet)
        else list(segment_set)
    )
    if not segments:
        raise DataError("segment set must be non-empty")
    if not isinstance(crop_config, CropConfig):
        crop_config = CropConfig(sizes=tuple(crop_config))
    lattice = generate_lattice(crop_config)
    crop_vecs = provider.embed_crops(image, lattice.crops)
    seg_vecs = provider.embed_texts(segments)
    matrix = similarity_matrix(crop_vecs, seg_vecs, crops=lattice.crops, segments=segments)
    report = best_matches(matrix)

    report.baseline_score = baseline_similarity(image, caption, provider)
    return report


def baseline_similarity(image, caption, provider) -> float:
    """Whole-image vs whole-caption score, computed through the same matrix
    machinery as the match scores so degenerate configurations coincide
    exactly."""
    full_vec = provider.embed_crops(image, [full_image_box(image)])[0]
    caption_vec = provider.embed_texts([caption])[0]
    return float(similarity_matrix(full_vec[None, :], caption_vec[None, :]).values[0, 0])
