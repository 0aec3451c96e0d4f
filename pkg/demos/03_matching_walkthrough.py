"""Crop-segment matching, step by step, on one controlled color-swap scene.

Shows why whole-input scoring collapses for a bag-of-words embedder while
per-segment argmax matching over crops separates the swapped captions: the
crops that isolate one object carry unambiguous evidence.
"""

from cropmatch.embedding import EmbeddingProvider, KIND_BAG, KIND_BOUND, SyntheticBackend
from cropmatch.geometry import CropConfig, generate_lattice
from cropmatch.matching import baseline_similarity, best_matches, similarity_matrix
from cropmatch.synthctrl import generate_instance, rasterize

inst = generate_instance("color", 7)
image = rasterize(inst.positive)
print("positive caption:", inst.positive_caption)
print("negative caption:", inst.negative_caption)
segments_pos = list(inst.gold_segments["coarse"][0])
segments_neg = list(inst.gold_segments["coarse"][1])
print("positive segments:", segments_pos)

lattice = generate_lattice(CropConfig(mode="overlap"))

for kind in (KIND_BAG, KIND_BOUND):
    provider = EmbeddingProvider(SyntheticBackend(kind))
    print(f"\n=== {kind} ===")
    base_pos = baseline_similarity(image, inst.positive_caption, provider)
    base_neg = baseline_similarity(image, inst.negative_caption, provider)
    print(f"whole-image baseline: positive {base_pos:.4f}  negative {base_neg:.4f}"
          f"  -> {'tie!' if base_pos == base_neg else 'separated'}")

    crop_vecs = provider.embed_crops(image, lattice.crops)
    for name, segments in (("positive", segments_pos), ("negative", segments_neg)):
        matrix = similarity_matrix(
            crop_vecs, provider.embed_texts(segments),
            crops=lattice.crops, segments=segments,
        )
        report = best_matches(matrix)
        print(f"{name} caption, matched score {report.ita_score:.4f}")
        for match in report.matches:
            box = lattice.crops[match.crop_index]
            print(
                f"   {segments[match.segment_index]!r:<42} -> sim {match.similarity:.4f}"
                f"  crop ({box.x},{box.y},{box.w},{box.h})"
            )

print(
    "\nThe bag embedder ties at the whole-image level but separates once "
    "isolating crops are in play; the bound embedder separates either way."
)
