"""Crop lattices: how the image is divided before matching.

Every image is worked at 224x224.  Six crop sizes sweep the image either on
a non-overlapping grid (stride = crop size) or with half-size strides
(overlap).  Crops that would stick out past the border are dropped, which
is exactly what makes the totals land on 86 and 270.
"""

from collections import Counter

from cropmatch.geometry import CropConfig, DEFAULT_CROP_SIZES, generate_lattice

print("crop sizes:", DEFAULT_CROP_SIZES)

for mode in ("grid", "overlap"):
    lattice = generate_lattice(CropConfig(mode=mode))
    counts = Counter((box.w, box.h) for box in lattice.crops)
    print(f"\n{mode} mode: {len(lattice)} crops")
    for size in DEFAULT_CROP_SIZES:
        sw, sh = lattice.config.stride_for(size)
        print(f"  {size[0]:>3}x{size[1]:<3} stride ({sw:>3},{sh:<3}) -> {counts[size]:>3} crops")

# The first few crops, in their deterministic order (size index, y, x):
lattice = generate_lattice(CropConfig(mode="grid"))
print("\nfirst five crops of the grid lattice:")
for box in lattice.crops[:5]:
    print(f"  x={box.x:<4} y={box.y:<4} w={box.w:<4} h={box.h}")

# Overlap strides include every grid position, so the overlap lattice is a
# strict superset of the grid lattice position-wise.
grid_positions = {(b.w, b.h, b.x, b.y) for b in generate_lattice(CropConfig(mode="grid")).crops}
over_positions = {(b.w, b.h, b.x, b.y) for b in generate_lattice(CropConfig(mode="overlap")).crops}
print("\ngrid positions subset of overlap positions:", grid_positions <= over_positions)
