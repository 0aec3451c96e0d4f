"""Crop-lattice / text-segment matching for image-text similarity scoring,
plus a bidirectional retrieval evaluation harness with synthetic oracles."""

from .datasets import BidirInstance, Manifest, is_swap_pair, load_manifest, save_manifest
from .embedding import (
    BackendDescriptor,
    EmbeddingProvider,
    RemoteBackend,
    SyntheticBackend,
    VectorCache,
    cosine,
    make_backend,
)
from .geometry import (
    DEFAULT_CROP_SIZES,
    CropBox,
    CropConfig,
    CropLattice,
    extract_crop,
    generate_lattice,
    to_working_resolution,
)
from .matching import (
    MatchReport,
    SimilarityMatrix,
    best_matches,
    ita_similarity,
    similarity_matrix,
)
from .metrics import (
    InstanceScores,
    MetricsReport,
    SimilarityTable,
    aggregate,
    instance_scores,
)
from .synthctrl import SceneSpec, SwapInstanceSpec, emit_manifest, generate_instance, rasterize
from .textseg import (
    SceneGraph,
    SceneObject,
    SceneRelation,
    SegmentSet,
    segments_from_llm,
    segments_from_scene_graph,
    validate_segment_pair,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
