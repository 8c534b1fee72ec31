import json
import os
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from shapely.geometry import Point, Polygon

from removal_synth.annotations import (
    crop_instance,
    decode_mask,
    encode_rle,
    load_annotations,
    load_backgrounds,
    load_instances,
)
from removal_synth.exceptions import DegeneratePolygon, EmptyMask, LengthMismatch, SchemaViolation, UnreadableFile

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


def brute_even_odd(rings, width, height):
    """Crossing count of a rightward ray from every pixel center, one pixel at a time."""
    out = np.zeros((height, width), bool)
    for i in range(height):
        for j in range(width):
            px, py = j + 0.5, i + 0.5
            inside = False
            for ring in rings:
                n = len(ring)
                for k in range(n):
                    (x0, y0), (x1, y1) = ring[k], ring[(k + 1) % n]
                    if (y0 > py) != (y1 > py):
                        xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
                        if xc > px:
                            inside = not inside
            out[i, j] = inside
    return out


def test_square_matches_point_in_polygon():
    ring = [[1, 1], [4, 1], [4, 4], [1, 4]]
    m = decode_mask({"polygon": ring}, 6, 6)
    poly = Polygon(ring)
    oracle = np.array([[poly.contains(Point(j + 0.5, i + 0.5)) for j in range(6)] for i in range(6)])
    assert m.sum() == 9
    assert np.array_equal(m, oracle)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_star_polygons_match_shapely(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    t = np.sort(rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(2, 9, n)
    ring = np.column_stack([10 + r * np.cos(t), 10 + r * np.sin(t)])
    poly = Polygon(ring)
    if not poly.is_valid:
        return
    m = decode_mask({"polygon": ring.tolist()}, 20, 20)
    oracle = np.array([[poly.contains(Point(j + 0.5, i + 0.5)) for j in range(20)] for i in range(20)])
    # pixel centers exactly on an edge are measure-zero under random vertices
    assert np.array_equal(m, oracle)


def test_self_intersecting_and_holes_use_even_odd():
    bowtie = [[0, 0], [8, 8], [8, 0], [0, 8]]
    assert np.array_equal(decode_mask({"polygon": bowtie}, 8, 8), brute_even_odd([np.array(bowtie, float)], 8, 8))
    outer = [[0, 0], [10, 0], [10, 10], [0, 10]]
    hole = [[3, 3], [7, 3], [7, 7], [3, 7]]
    m = decode_mask({"polygon": [outer, hole]}, 10, 10)
    assert m.sum() == 100 - 16 and not m[5, 5]


def test_rle_example():
    m = decode_mask({"rle": {"counts": [3, 2, 31]}}, 6, 6)
    assert np.flatnonzero(m.ravel()).tolist() == [3, 4]


def test_rle_length_mismatch():
    with pytest.raises(LengthMismatch):
        decode_mask({"rle": {"counts": [3, 2, 30]}}, 6, 6)


def test_degenerate_polygon_warns():
    with pytest.warns(DegeneratePolygon):
        m = decode_mask({"polygon": [[0, 0], [3, 3]]}, 6, 6)
    assert not m.any()


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1), st.sampled_from(["row-major", "column-major"]))
def test_rle_round_trip(h, w, seed, order):
    m = np.random.default_rng(seed).random((h, w)) < 0.4
    enc = encode_rle(m, order)
    assert sum(enc["counts"]) == h * w
    assert np.array_equal(decode_mask({"rle": enc}, w, h), m)


def test_crop_examples():
    src = np.zeros((100, 100, 3), np.uint8)
    m = np.zeros((100, 100), bool)
    m[20:30, 40:50] = True
    inst = crop_instance(src, m, "c")
    assert inst.area_ratio == 0.01 and inst.mask.shape == (10, 10)
    full = crop_instance(src, np.ones((100, 100), bool), "c")
    assert full.area_ratio == 1.0 and full.image.shape == (100, 100, 3)
    ell = np.zeros((100, 100), bool)
    ell[10:40, 5:25] = True
    ell[10:30, 10:25] = False  # L shape, bbox 20 wide and 30 tall
    inst = crop_instance(src, ell, "c")
    assert inst.mask.shape == (30, 20) and inst.area == ell.sum()
    with pytest.raises(EmptyMask):
        crop_instance(src, np.zeros((100, 100), bool), "c")


def test_golden_polygon_fixture():
    aset = load_annotations(os.path.join(FIXTURES, "polygon.json"))
    assert (len(aset.images), len(aset.annotations)) == (1, 1)
    (inst,) = load_instances(aset)
    img = (np.arange(108).reshape(6, 6, 3) * 2).astype(np.uint8)
    assert inst.id == "sq" and inst.class_label == "square" and inst.score == 0.3
    assert inst.area_ratio == 9 / 36
    assert np.array_equal(inst.image, img[1:4, 1:4])


def test_golden_rle_fixture():
    aset = load_annotations(os.path.join(FIXTURES, "rle.json"))
    row, col = load_instances(aset)
    assert row.mask.shape == (1, 2) and np.isnan(row.score)
    assert col.mask.shape == (4, 1) and col.score == 0.25
    (bg,) = load_backgrounds(aset)
    assert bg.coverage_ratio == 6 / 36


def write(tmp_path, doc):
    p = tmp_path / "a.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_drops_are_counted(tmp_path):
    images = [{"id": 1, "file": "x.png", "width": 6, "height": 6}]
    anns = [
        {"image_id": 2, "class": "a", "polygon": [[0, 0], [1, 0], [1, 1]]},
        {"image_id": 1, "class": "a", "polygon": [[0, 0], [9, 0], [1, 1]]},
        {"image_id": 1, "class": "a", "rle": {"counts": [1, 2]}},
        {"image_id": 1, "class": "a"},
        {"image_id": 1, "polygon": [[0, 0], [1, 0], [1, 1]]},
        {"image_id": 1, "class": "a", "polygon": [[0, 0], [1, 0], [1, 1]]},
    ]
    aset = load_annotations(write(tmp_path, {"images": images, "annotations": anns}))
    assert len(aset.annotations) == 1
    assert aset.dropped == {"MissingImage": 1, "OutOfBounds": 1, "LengthMismatch": 1, "NoRegion": 1, "NoClass": 1}


def test_empty_and_broken_files(tmp_path):
    aset = load_annotations(write(tmp_path, {"images": [], "annotations": []}))
    assert len(aset.annotations) == 0
    with pytest.raises(SchemaViolation):
        load_annotations(write(tmp_path, {"images": {}}))
    with pytest.raises(UnreadableFile):
        load_annotations(str(tmp_path / "missing.json"))
