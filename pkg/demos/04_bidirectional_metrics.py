"""Bidirectional retrieval scoring: I2T, T2I, group, and the random floor.

An instance passes I2T when each image strictly prefers its own caption,
T2I when each caption strictly prefers its own image, and group when both
hold.  For random similarities the expected rates are 25 / 25 / 16.7
percent; strictness means exact ties score zero.
"""

import numpy as np

from cropmatch.metrics import SimilarityTable, aggregate, instance_scores

examples = [
    ("clean win", SimilarityTable(0.8, 0.3, 0.2, 0.7)),
    ("tie on the positive image", SimilarityTable(0.5, 0.5, 0.1, 0.9)),
    ("wrong image preference", SimilarityTable(0.9, 0.1, 0.95, 0.99)),
]
for label, table in examples:
    bits = instance_scores(table)
    print(f"{label:<28} i2t={bits.i2t} t2i={bits.t2i} group={bits.group}")

rng = np.random.default_rng(0)
scores = [instance_scores(SimilarityTable(*rng.uniform(0, 1, 4))) for _ in range(200_000)]
report = aggregate(scores, fingerprint="random-floor")
print("\nrandom-similarity floor over 200k instances:")
for key in ("i2t", "t2i", "group"):
    print(f"  {key:>5}: {report.percentages[key]:.1f}%")
print("  (expected 25.0 / 25.0 / 16.7)")

print("\nfiner one-sided bits for the first example:")
bits = instance_scores(examples[0][1])
print(
    f"  i_pos2t={bits.i_pos2t} i_neg2t={bits.i_neg2t} "
    f"t_pos2i={bits.t_pos2i} t_neg2i={bits.t_neg2i}"
)
