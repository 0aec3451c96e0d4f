"""Bidirectional retrieval scoring.

Each evaluation instance pairs a positive caption/image (C0, I0) with a
hard-negative caption/image (C1, I1).  Given the 2x2 table of similarity
scores, an instance earns:

* ``i2t`` when each image prefers its own caption: s(C0,I0) > s(C1,I0)
  and s(C1,I1) > s(C0,I1);
* ``t2i`` when each caption prefers its own image: s(C0,I0) > s(C0,I1)
  and s(C1,I1) > s(C1,I0);
* ``group`` when both hold.

All comparisons are strict: exact ties score zero, which keeps symmetric
degenerate scorers (e.g. bag-of-words on word-swap captions) visibly at
zero rather than coin-flipping.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

from .errors import DataError

FINER_KEYS = ("i_pos2t", "i_neg2t", "t_pos2i", "t_neg2i")
METRIC_KEYS = ("i2t", "t2i", "group") + FINER_KEYS


@dataclass(frozen=True)
class SimilarityTable:
    """s00 = s(C0,I0), s10 = s(C1,I0), s01 = s(C0,I1), s11 = s(C1,I1)."""

    s00: float
    s10: float
    s01: float
    s11: float

    def __post_init__(self):
        for name in ("s00", "s10", "s01", "s11"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DataError(f"similarity {name} must be finite, got {value!r}")


@dataclass(frozen=True)
class InstanceScores:
    i2t: int
    t2i: int
    group: int
    i_pos2t: int
    i_neg2t: int
    t_pos2i: int
    t_neg2i: int


def instance_scores(table: SimilarityTable) -> InstanceScores:
    i_pos2t = int(table.s00 > table.s10)
    i_neg2t = int(table.s11 > table.s01)
    t_pos2i = int(table.s00 > table.s01)
    t_neg2i = int(table.s11 > table.s10)
    i2t = i_pos2t & i_neg2t
    t2i = t_pos2i & t_neg2i
    return InstanceScores(
        i2t=i2t,
        t2i=t2i,
        group=i2t & t2i,
        i_pos2t=i_pos2t,
        i_neg2t=i_neg2t,
        t_pos2i=t_pos2i,
        t_neg2i=t_neg2i,
    )


@dataclass
class MetricsReport:
    n_instances: int
    counts: dict
    percentages: dict
    fingerprint: str = ""

    def to_json(self) -> str:
        payload = asdict(self)
        payload["schema_version"] = 1
        return json.dumps(payload, indent=2, sort_keys=True)

    def csv_row(self, dataset: str = "", config: str = "") -> str:
        cells = [dataset, config or self.fingerprint, str(self.n_instances)]
        cells += [f"{self.percentages[k]:.1f}" for k in METRIC_KEYS]
        return ",".join(cells)

    @staticmethod
    def csv_header() -> str:
        return ",".join(["dataset", "config", "n"] + [k.upper() for k in METRIC_KEYS])


def aggregate(instances, fingerprint: str = "") -> MetricsReport:
    """Aggregate per-instance bits into counts and one-decimal percentages."""
    instances = list(instances)
    if not instances:
        raise DataError("cannot aggregate an empty list of instance scores")
    n = len(instances)
    counts = {key: sum(getattr(s, key) for s in instances) for key in METRIC_KEYS}
    percentages = {key: round(100.0 * counts[key] / n, 1) for key in METRIC_KEYS}
    return MetricsReport(
        n_instances=n, counts=counts, percentages=percentages, fingerprint=fingerprint
    )
