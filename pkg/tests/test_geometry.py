import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cropmatch.errors import ConfigError, DataError
from cropmatch.geometry import (
    DEFAULT_CROP_SIZES,
    CropBox,
    CropConfig,
    extract_crop,
    full_image_box,
    generate_lattice,
    lattice_csv_string,
    to_working_resolution,
)


def brute_force_positions(size, stride, side):
    """Independent oracle: scan every coordinate pair on the stride lattice."""
    w, h = size
    sw, sh = stride
    positions = []
    for y in range(side):
        for x in range(side):
            if x % sw == 0 and y % sh == 0 and x + w <= side and y + h <= side:
                positions.append((x, y))
    return positions


def per_size_counts(lattice):
    counts = {}
    for box in lattice.crops:
        counts[(box.w, box.h)] = counts.get((box.w, box.h), 0) + 1
    return [counts.get(size, 0) for size in lattice.config.sizes]


def test_grid_mode_yields_86_crops():
    lattice = generate_lattice(CropConfig(mode="grid"))
    assert len(lattice) == 86
    assert per_size_counts(lattice) == [49, 16, 4, 1, 8, 8]


def test_overlap_mode_yields_270_crops():
    lattice = generate_lattice(CropConfig(mode="overlap"))
    assert len(lattice) == 270
    assert per_size_counts(lattice) == [169, 49, 9, 1, 21, 21]


@pytest.mark.parametrize("mode", ["grid", "overlap"])
def test_counts_agree_with_brute_force_enumeration(mode):
    config = CropConfig(mode=mode)
    lattice = generate_lattice(config)
    for size in config.sizes:
        expected = brute_force_positions(size, config.stride_for(size), config.image_side)
        got = [(b.x, b.y) for b in lattice.crops if (b.w, b.h) == size]
        assert sorted(got) == sorted(expected)


@pytest.mark.parametrize("mode", ["grid", "overlap"])
def test_closed_form_count_matches(mode):
    config = CropConfig(mode=mode)
    lattice = generate_lattice(config)
    counts = per_size_counts(lattice)
    for size, count in zip(config.sizes, counts):
        w, h = size
        sw, sh = config.stride_for(size)
        side = config.image_side
        assert count == ((side - w) // sw + 1) * ((side - h) // sh + 1)


@pytest.mark.parametrize("mode", ["grid", "overlap"])
def test_full_image_size_gives_single_crop(mode):
    lattice = generate_lattice(CropConfig(sizes=((224, 224),), mode=mode))
    assert lattice.crops == [CropBox(0, 0, 224, 224)]


def test_overlap_positions_superset_of_grid():
    grid = generate_lattice(CropConfig(mode="grid"))
    over = generate_lattice(CropConfig(mode="overlap"))
    for size in DEFAULT_CROP_SIZES:
        grid_pos = {(b.x, b.y) for b in grid.crops if (b.w, b.h) == size}
        over_pos = {(b.x, b.y) for b in over.crops if (b.w, b.h) == size}
        assert grid_pos <= over_pos


def test_lattice_is_deterministic_and_ordered():
    a = generate_lattice(CropConfig(mode="overlap"))
    b = generate_lattice(CropConfig(mode="overlap"))
    assert a.crops == b.crops
    keys = [(a.size_index(box), box.y, box.x) for box in a.crops]
    assert keys == sorted(keys)
    assert len(set(a.crops)) == len(a.crops)


def test_oversized_crop_rejected():
    with pytest.raises(ConfigError):
        CropConfig(sizes=((256, 256),))


def test_odd_size_rejected_in_overlap_mode():
    with pytest.raises(ConfigError):
        CropConfig(sizes=((33, 33),), mode="overlap")
    CropConfig(sizes=((33, 33),), mode="grid")  # fine with integral stride


def test_duplicate_and_empty_sizes_rejected():
    with pytest.raises(ConfigError):
        CropConfig(sizes=((32, 32), (32, 32)))
    with pytest.raises(ConfigError):
        CropConfig(sizes=())


@settings(max_examples=60, deadline=None)
@given(
    side=st.integers(min_value=8, max_value=96).map(lambda v: v * 2),
    sizes=st.lists(
        st.tuples(
            st.integers(min_value=1, max_value=8).map(lambda v: v * 2),
            st.integers(min_value=1, max_value=8).map(lambda v: v * 2),
        ),
        min_size=1,
        max_size=4,
        unique=True,
    ),
    mode=st.sampled_from(["grid", "overlap"]),
)
def test_every_emitted_crop_is_in_bounds(side, sizes, mode):
    sizes = tuple((min(w, side), min(h, side)) for w, h in sizes)
    if len(set(sizes)) != len(sizes):
        return
    lattice = generate_lattice(CropConfig(sizes=sizes, mode=mode, image_side=side))
    for box in lattice.crops:
        assert box.within(side, side)


def test_extract_full_image_is_identity():
    rng = np.random.default_rng(0)
    image = rng.integers(0, 255, size=(224, 224, 3), dtype=np.uint8)
    out = extract_crop(image, full_image_box(image))
    assert np.array_equal(out, image)


def test_extract_checkerboard_quadrant():
    tile = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    board = np.tile(tile, (4, 4))
    quadrant = extract_crop(board, CropBox(0, 0, 4, 4))
    assert np.array_equal(quadrant, np.tile(tile, (2, 2)))


def test_extract_out_of_bounds_raises():
    image = np.zeros((16, 16, 3), dtype=np.uint8)
    with pytest.raises(DataError):
        extract_crop(image, CropBox(8, 8, 16, 16))


def test_extract_synthetic_scene_quadrant_contains_only_local_objects():
    # Rasterizer oracle: a right-top quadrant crop of a generated scene has
    # pixel content only where objects intersect that quadrant.
    from cropmatch.synthctrl import generate_instance, rasterize
    from cropmatch.synthworld import decode_objects

    inst = generate_instance("color", 11)
    image = rasterize(inst.positive)
    crop = extract_crop(image, CropBox(112, 0, 112, 112))
    decoded = decode_objects(crop)
    in_quadrant = [
        obj
        for obj in inst.positive.objects
        if obj.bbox()[2] > 112 and obj.bbox()[1] < 112
    ]
    assert len(decoded) == len(in_quadrant)


def test_working_resolution_passthrough_and_resize():
    square = np.random.default_rng(1).integers(0, 255, (224, 224, 3), dtype=np.uint8)
    assert to_working_resolution(square) is square
    tall = np.zeros((448, 300, 3), dtype=np.uint8)
    out = to_working_resolution(tall)
    assert out.shape == (224, 224, 3)


def test_csv_dump_has_one_row_per_crop():
    lattice = generate_lattice(CropConfig(mode="grid"))
    text = lattice_csv_string(lattice)
    lines = text.strip().splitlines()
    assert lines[0] == "index,size_index,x,y,w,h"
    assert len(lines) == 87
    assert lines[1].startswith("0,0,0,0,32,32")
