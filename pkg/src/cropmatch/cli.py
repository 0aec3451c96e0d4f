"""Command-line front door.

Subcommands: ``eval`` (run a bidirectional retrieval evaluation), ``crops``
(dump a crop lattice as CSV), ``segment`` (segment one caption), ``synth``
(generate a controlled swap dataset), ``simdump`` (dump the match report
for one instance).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 backend
error.  ``ITA_CACHE_DIR`` overrides the embedding cache directory.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .datasets import Manifest, load_manifest
from .embedding import EmbeddingProvider, VectorCache, make_backend
from .errors import (
    BackendError,
    ConfigError,
    CropmatchError,
    DataError,
    SegmentationError,
    SimilarityError,
)
from .geometry import (
    DEFAULT_CROP_SIZES,
    CropConfig,
    WORKING_SIDE,
    generate_lattice,
    lattice_csv_string,
    to_working_resolution,
)
from .matching import baseline_similarity, best_matches, similarity_matrix
from .metrics import MetricsReport, SimilarityTable, aggregate, instance_scores
from .synthctrl import VARIANTS, emit_manifest
from .textseg import (
    GRANULARITIES,
    GroupCount,
    HttpLlmClient,
    ReplayLlmClient,
    ReplayStore,
    SceneGraph,
    SceneObject,
    SceneRelation,
    segments_from_llm,
    segments_from_scene_graph,
)

HIST_BINS = 40


@dataclass
class RunConfig:
    manifest: str
    backend: str
    mode: str = "none"  # none | grid | overlap
    segments: str = "none"  # none | scene-graph | llm:<granularity> | file:<path>
    granularity: str = "coarse"
    out_dir: str = "eval-out"
    cache_dir: str | None = None
    jobs: int = 1
    limit: int | None = None
    llm_url: str | None = None
    replay: str | None = None
    hist_scale: float = 1.0
    hist_bias: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "grid", "overlap"):
            raise ConfigError(f"unknown crop mode {self.mode!r}")
        source = self.segments.split(":", 1)[0]
        if source not in ("none", "scene-graph", "llm", "file"):
            raise ConfigError(f"unknown segment source {self.segments!r}")
        if self.cache_dir is None:
            self.cache_dir = os.environ.get("ITA_CACHE_DIR") or None

    @property
    def segment_source(self) -> str:
        return self.segments.split(":", 1)[0]

    @property
    def segment_arg(self) -> str | None:
        parts = self.segments.split(":", 1)
        return parts[1] if len(parts) == 2 else None

    def crop_config(self) -> CropConfig:
        if self.mode == "none":
            return CropConfig(sizes=((WORKING_SIDE, WORKING_SIDE),), mode="grid")
        return CropConfig(sizes=DEFAULT_CROP_SIZES, mode=self.mode)

    def fingerprint(self, backend_id: str) -> str:
        blob = f"{backend_id}|{self.mode}|{self.segments}|{self.granularity}"
        return hashlib.sha1(blob.encode()).hexdigest()[:12]


def _graph_from_jsonable(raw: dict) -> SceneGraph:
    return SceneGraph(
        objects=tuple(
            SceneObject(id=o["id"], noun=o["noun"], attributes=tuple(o.get("attributes", ())))
            for o in raw.get("objects", ())
        ),
        relations=tuple(
            SceneRelation(
                subject_id=r["subject_id"],
                predicate=r["predicate"],
                object_id=r["object_id"],
            )
            for r in raw.get("relations", ())
        ),
        group_counts=tuple(
            GroupCount(count=g["count"], noun=g["noun"]) for g in raw.get("group_counts", ())
        ),
    )


class SegmentSource:
    """Resolves (instance, side) -> list of segment strings per RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.kind = config.segment_source
        self._sidecar = {}
        self._llm_client = None
        if self.kind == "file":
            path = config.segment_arg
            if not path:
                raise ConfigError("segment source 'file' needs file:<path>")
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    self._sidecar[(rec["id"], rec["granularity"])] = rec
        elif self.kind == "llm":
            granularity = config.segment_arg or config.granularity
            if granularity not in GRANULARITIES:
                raise ConfigError(f"unknown llm granularity {granularity!r}")
            self.granularity = granularity
            store = ReplayStore(config.replay)
            inner = HttpLlmClient(config.llm_url) if config.llm_url else None
            self._llm_client = ReplayLlmClient(store, inner=inner)

    def segments_for(self, instance, side: str, caption: str) -> list:
        if self.kind == "none":
            return [caption]
        granularity = getattr(self, "granularity", self.config.granularity)
        if self.kind == "file":
            rec = self._sidecar.get((instance.id, granularity))
            if rec is None:
                raise DataError(
                    f"no sidecar segments for instance {instance.id!r} at {granularity!r}"
                )
            key = "positive_segments" if side == "positive" else "negative_segments"
            return list(rec[key])
        if self.kind == "scene-graph":
            embedded = instance.segments_for(side, granularity)
            if embedded:
                return embedded
            key = "scene_graph" if side == "positive" else "negative_scene_graph"
            raw = instance.extra.get(key)
            if raw is None:
                raise DataError(
                    f"instance {instance.id!r} carries no scene graph for {side} caption"
                )
            return list(segments_from_scene_graph(_graph_from_jsonable(raw), granularity).segments)
        return list(segments_from_llm(caption, granularity, self._llm_client).segments)


def _score_pair(provider, crop_vecs, lattice, image, segments, caption):
    seg_vecs = provider.embed_texts(segments)
    matrix = similarity_matrix(crop_vecs, seg_vecs, crops=lattice.crops, segments=segments)
    report = best_matches(matrix)
    report.baseline_score = baseline_similarity(image, caption, provider)
    return report


def evaluate_instance(instance, manifest, provider, crop_config, source):
    """Score the 2x2 caption/image table for one instance."""
    image_pos = to_working_resolution(manifest.load_image(instance.image))
    image_neg = to_working_resolution(manifest.load_image(instance.negative_image))
    seg_pos = source.segments_for(instance, "positive", instance.caption)
    seg_neg = source.segments_for(instance, "negative", instance.negative_caption)
    lattice = generate_lattice(crop_config)

    crops_pos = provider.embed_crops(image_pos, lattice.crops)
    crops_neg = provider.embed_crops(image_neg, lattice.crops)

    reports = {
        "s00": _score_pair(provider, crops_pos, lattice, image_pos, seg_pos, instance.caption),
        "s10": _score_pair(provider, crops_pos, lattice, image_pos, seg_neg, instance.negative_caption),
        "s01": _score_pair(provider, crops_neg, lattice, image_neg, seg_pos, instance.caption),
        "s11": _score_pair(provider, crops_neg, lattice, image_neg, seg_neg, instance.negative_caption),
    }
    table = SimilarityTable(
        s00=reports["s00"].ita_score,
        s10=reports["s10"].ita_score,
        s01=reports["s01"].ita_score,
        s11=reports["s11"].ita_score,
    )
    return table, instance_scores(table), reports


def run_eval(config: RunConfig):
    """Evaluate a manifest under one RunConfig; returns the MetricsReport."""
    manifest = load_manifest(config.manifest)
    if config.limit is not None:
        manifest = Manifest(
            name=manifest.name,
            instances=manifest.instances[: config.limit],
            base_dir=manifest.base_dir,
        )
    if not manifest.instances:
        raise DataError(f"manifest {config.manifest!r} holds no instances")
    backend = make_backend(config.backend)
    provider = EmbeddingProvider(backend, cache=VectorCache(config.cache_dir))
    crop_config = config.crop_config()
    source = SegmentSource(config)
    fingerprint = config.fingerprint(provider.descriptor.backend_id)

    os.makedirs(config.out_dir, exist_ok=True)
    match_dir = os.path.join(config.out_dir, "matches")
    os.makedirs(match_dir, exist_ok=True)

    rows = []
    scores = []
    hist_pos = []
    hist_neg = []

    def work(instance):
        return instance, evaluate_instance(instance, manifest, provider, crop_config, source)

    def iter_results():
        if config.jobs > 1:
            with ThreadPoolExecutor(max_workers=config.jobs) as pool:
                yield from pool.map(work, manifest.instances)
        else:
            for instance in manifest.instances:
                yield work(instance)

    try:
        for instance, (table, bits, reports) in iter_results():
            rows.append(
                {
                    "id": instance.id,
                    "s00": table.s00,
                    "s10": table.s10,
                    "s01": table.s01,
                    "s11": table.s11,
                    "i2t": bits.i2t,
                    "t2i": bits.t2i,
                    "group": bits.group,
                }
            )
            scores.append(bits)
            for key, report in reports.items():
                sims = [m.similarity for m in report.matches]
                (hist_pos if key in ("s00", "s10") else hist_neg).extend(sims)
            dump = {key: report.to_jsonable() for key, report in reports.items()}
            dump["id"] = instance.id
            with open(
                os.path.join(match_dir, f"{instance.id}.json"), "w", encoding="utf-8"
            ) as fh:
                json.dump(dump, fh, indent=2, sort_keys=True)
    except CropmatchError:
        # Flush whatever completed before the failure so long runs are not lost.
        if scores:
            _flush_report(
                config, manifest, fingerprint, rows, scores, hist_pos, hist_neg, partial=True
            )
        raise

    report = _flush_report(config, manifest, fingerprint, rows, scores, hist_pos, hist_neg)
    return report


def _flush_report(config, manifest, fingerprint, rows, scores, hist_pos, hist_neg, partial=False):
    report = aggregate(scores, fingerprint=fingerprint)
    payload = {
        "schema_version": 1,
        "partial": partial,
        "dataset": manifest.name,
        "config": {
            "backend": config.backend,
            "mode": config.mode,
            "segments": config.segments,
            "granularity": config.granularity,
        },
        "fingerprint": fingerprint,
        "metrics": {
            "n_instances": report.n_instances,
            "counts": report.counts,
            "percentages": report.percentages,
        },
        "instances": rows,
    }
    suffix = "_partial" if partial else ""
    with open(os.path.join(config.out_dir, f"report{suffix}.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    with open(os.path.join(config.out_dir, f"report{suffix}.csv"), "w", encoding="utf-8") as fh:
        fh.write(MetricsReport.csv_header() + "\n")
        fh.write(report.csv_row(dataset=manifest.name) + "\n")
    _write_histogram(config, hist_pos, hist_neg)
    return report


def _write_histogram(config, hist_pos, hist_neg):
    """Histogram CSV of match similarities split by image polarity.

    Scale/bias apply to the reported values only; ranking is done upstream
    on raw cosines.
    """
    lo = -config.hist_scale + config.hist_bias
    hi = config.hist_scale + config.hist_bias
    edges = np.linspace(lo, hi, HIST_BINS + 1)

    def counts(values):
        if not values:
            return np.zeros(HIST_BINS, dtype=int)
        scaled = np.asarray(values) * config.hist_scale + config.hist_bias
        hist, _ = np.histogram(scaled, bins=edges)
        return hist

    pos_counts = counts(hist_pos)
    neg_counts = counts(hist_neg)
    path = os.path.join(config.out_dir, "histogram.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,positive_image,negative_image\n")
        for i in range(HIST_BINS):
            fh.write(f"{edges[i]:.6f},{edges[i+1]:.6f},{pos_counts[i]},{neg_counts[i]}\n")


# --------------------------------------------------------------------------
# Subcommand handlers


def _cmd_eval(args) -> int:
    config = RunConfig(
        manifest=args.manifest,
        backend=args.backend,
        mode=args.mode,
        segments=args.segments,
        granularity=args.granularity,
        out_dir=args.out_dir,
        cache_dir=args.cache_dir,
        jobs=args.jobs,
        limit=args.limit,
        llm_url=args.llm_url,
        replay=args.replay,
        hist_scale=args.hist_scale,
        hist_bias=args.hist_bias,
    )
    report = run_eval(config)
    print(MetricsReport.csv_header())
    print(report.csv_row())
    print(f"report written to {config.out_dir}/report.json")
    return 0


def _cmd_crops(args) -> int:
    sizes = DEFAULT_CROP_SIZES
    if args.sizes:
        sizes = tuple(
            tuple(int(v) for v in chunk.split("x")) for chunk in args.sizes.split(",")
        )
    lattice = generate_lattice(CropConfig(sizes=sizes, mode=args.mode, image_side=args.side))
    text = lattice_csv_string(lattice)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_segment(args) -> int:
    if args.scene_graph:
        with open(args.scene_graph, encoding="utf-8") as fh:
            graph = _graph_from_jsonable(json.load(fh))
        segment_set = segments_from_scene_graph(graph, args.granularity)
    elif args.caption:
        store = ReplayStore(args.replay)
        inner = HttpLlmClient(args.llm_url) if args.llm_url else None
        client = ReplayLlmClient(store, inner=inner)
        segment_set = segments_from_llm(args.caption, args.granularity, client)
    else:
        raise ConfigError("segment needs --caption or --scene-graph")
    if args.json:
        print(json.dumps({"segments": list(segment_set.segments), "provenance": segment_set.provenance}))
    else:
        for segment in segment_set.segments:
            print(segment)
    return 0


def _cmd_synth(args) -> int:
    manifest = emit_manifest(args.variant, args.n, args.seed, args.out_dir)
    print(f"wrote {len(manifest)} instances to {args.out_dir}")
    return 0


def _cmd_simdump(args) -> int:
    config = RunConfig(
        manifest=args.manifest,
        backend=args.backend,
        mode=args.mode,
        segments=args.segments,
        granularity=args.granularity,
        cache_dir=args.cache_dir,
        llm_url=args.llm_url,
        replay=args.replay,
    )
    manifest = load_manifest(config.manifest)
    matches = [inst for inst in manifest if inst.id == args.instance]
    if not matches:
        raise DataError(f"instance {args.instance!r} not found in {args.manifest}")
    instance = matches[0]
    backend = make_backend(config.backend)
    provider = EmbeddingProvider(backend, cache=VectorCache(config.cache_dir))
    source = SegmentSource(config)
    table, bits, reports = evaluate_instance(
        instance, manifest, provider, config.crop_config(), source
    )
    dump = {key: report.to_jsonable() for key, report in reports.items()}
    dump["id"] = instance.id
    dump["table"] = {"s00": table.s00, "s10": table.s10, "s01": table.s01, "s11": table.s11}
    dump["scores"] = {"i2t": bits.i2t, "t2i": bits.t2i, "group": bits.group}
    text = json.dumps(dump, indent=2, sort_keys=True)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cropmatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("eval", help="run a bidirectional retrieval evaluation")
    p_eval.add_argument("--manifest", required=True)
    p_eval.add_argument("--backend", required=True, help="synthetic-bound | synthetic-bag | http(s)://URL")
    p_eval.add_argument("--mode", default="none", choices=["none", "grid", "overlap"])
    p_eval.add_argument("--segments", default="none", help="none | scene-graph | llm:<gran> | file:<path>")
    p_eval.add_argument("--granularity", default="coarse", choices=list(GRANULARITIES))
    p_eval.add_argument("--out-dir", default="eval-out")
    p_eval.add_argument("--cache-dir", default=None)
    p_eval.add_argument("--jobs", type=int, default=1)
    p_eval.add_argument("--limit", type=int, default=None)
    p_eval.add_argument("--llm-url", default=None)
    p_eval.add_argument("--replay", default=None)
    p_eval.add_argument("--hist-scale", type=float, default=1.0)
    p_eval.add_argument("--hist-bias", type=float, default=0.0)
    p_eval.set_defaults(func=_cmd_eval)

    p_crops = sub.add_parser("crops", help="dump a crop lattice as CSV")
    p_crops.add_argument("--mode", default="grid", choices=["grid", "overlap"])
    p_crops.add_argument("--side", type=int, default=WORKING_SIDE)
    p_crops.add_argument("--sizes", default=None, help="e.g. 32x32,56x56")
    p_crops.add_argument("-o", "--output", default=None)
    p_crops.set_defaults(func=_cmd_crops)

    p_seg = sub.add_parser("segment", help="segment one caption")
    p_seg.add_argument("--granularity", default="coarse", choices=list(GRANULARITIES))
    p_seg.add_argument("--caption", default=None)
    p_seg.add_argument("--scene-graph", default=None, help="JSON file with a scene graph")
    p_seg.add_argument("--llm-url", default=None)
    p_seg.add_argument("--replay", default=None)
    p_seg.add_argument("--json", action="store_true")
    p_seg.set_defaults(func=_cmd_segment)

    p_synth = sub.add_parser("synth", help="generate a controlled swap dataset")
    p_synth.add_argument("--variant", required=True, choices=list(VARIANTS))
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out-dir", required=True)
    p_synth.set_defaults(func=_cmd_synth)

    p_dump = sub.add_parser("simdump", help="dump the match report for one instance")
    p_dump.add_argument("--manifest", required=True)
    p_dump.add_argument("--instance", required=True)
    p_dump.add_argument("--backend", required=True)
    p_dump.add_argument("--mode", default="overlap", choices=["none", "grid", "overlap"])
    p_dump.add_argument("--segments", default="scene-graph")
    p_dump.add_argument("--granularity", default="coarse", choices=list(GRANULARITIES))
    p_dump.add_argument("--cache-dir", default=None)
    p_dump.add_argument("--llm-url", default=None)
    p_dump.add_argument("--replay", default=None)
    p_dump.add_argument("-o", "--output", default=None)
    p_dump.set_defaults(func=_cmd_simdump)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, SegmentationError, SimilarityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except BackendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CropmatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
