import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from removal_synth._validation import bbox
from removal_synth.core import BackgroundRecord, ClassStats, InstanceRecord
from removal_synth.exceptions import BothEmpty, EmptyFeasibleRegion, InstanceTooLarge
from removal_synth.placement import (
    feasible_region,
    iou,
    margin_region,
    margins,
    paste_box,
    pick_center,
    resize_instance,
    sample_scale,
)

from conftest import background, solid_instance


def brute_region(bg, size, r, mode, pasted_mask=None):
    """Every integer center checked independently with plain Python arithmetic."""
    W, H = bg.width, bg.height
    w, h = size
    ex, ey = math.ceil(w / 2), math.ceil(h / 2)
    if pasted_mask is None:
        pasted_mask = np.ones((h, w), bool)
    out = np.zeros((H, W), bool)
    for cy in range(H):
        for cx in range(W):
            if not (ex <= cx <= W - ex and ey <= cy <= H - ey):
                continue
            x0, y0 = cx - ex, cy - ey
            ok = True
            for reg in bg.instance_regions:
                if not reg.any():
                    continue
                if mode == "bbox":
                    ys, xs = np.nonzero(reg)
                    bx0, by0, bx1, by1 = xs.min(), ys.min(), xs.max() + 1, ys.max() + 1
                    iw = max(0, min(x0 + w, bx1) - max(x0, bx0))
                    ih = max(0, min(y0 + h, by1) - max(y0, by0))
                    inter = iw * ih
                    union = w * h + (bx1 - bx0) * (by1 - by0) - inter
                else:
                    placed = np.zeros((H, W), bool)
                    placed[y0 : y0 + h, x0 : x0 + w] = pasted_mask
                    inter = int((placed & reg).sum())
                    union = int((placed | reg).sum())
                if not inter / union < r:
                    ok = False
                    break
            out[cy, cx] = ok
    return out


def random_case(seed, max_side=24):
    rng = np.random.default_rng(seed)
    W, H = (int(v) for v in rng.integers(4, max_side + 1, 2))
    regions = []
    for _ in range(int(rng.integers(0, 4))):
        m = rng.random((H, W)) < rng.uniform(0.05, 0.6)
        x0, y0 = int(rng.integers(0, W)), int(rng.integers(0, H))
        m[: y0, :] = False
        m[:, : x0] = False
        regions.append(m)
    bg = BackgroundRecord("b", np.zeros((H, W, 3), np.uint8), tuple(regions))
    w, h = int(rng.integers(1, W + 1)), int(rng.integers(1, H + 1))
    pm = rng.random((h, w)) < 0.7
    pm[0, :] = pm[-1, :] = True
    pm[:, 0] = pm[:, -1] = True
    r = float(rng.choice([0.0, 0.2, 0.5, 1.0, rng.uniform(0, 1)]))
    return bg, (w, h), r, pm


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["bbox", "mask"]))
def test_feasible_region_matches_brute_force(seed, mode):
    bg, size, r, pm = random_case(seed)
    got = feasible_region(bg, size, r, mode, pasted_mask=pm)
    assert np.array_equal(got, brute_region(bg, size, r, mode, pm))


def test_documented_example_r0():
    bg = background(10, 10, [(0, 0, 5, 5)])
    got = feasible_region(bg, (3, 3), 0.0)
    assert np.array_equal(got, brute_region(bg, (3, 3), 0.0, "bbox"))
    assert not got.any()  # IoU < 0 is unsatisfiable


def test_no_instances_gives_margin_rectangle():
    bg = background(20, 12)
    got = feasible_region(bg, (5, 4), 0.3)
    ys, xs = np.nonzero(got)
    assert (xs.min(), xs.max(), ys.min(), ys.max()) == (3, 17, 2, 10)
    assert got.sum() == 15 * 9


def test_r1_is_r2_except_identity():
    bg = background(20, 20, [(5, 5, 10, 10)])
    got = feasible_region(bg, (5, 5), 1.0)
    expected = margin_region((20, 20), (5, 5))
    expected[8, 8] = False  # the one center whose box equals the instance box
    assert np.array_equal(got, expected)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_antitone_in_r(seed, r1, r2):
    bg, size, _, pm = random_case(seed)
    lo, hi = sorted((r1, r2))
    for mode in ("bbox", "mask"):
        assert not (feasible_region(bg, size, lo, mode, pm) & ~feasible_region(bg, size, hi, mode, pm)).any()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_modes_agree_for_box_shaped_regions(seed, r):
    rng = np.random.default_rng(seed)
    W, H = (int(v) for v in rng.integers(6, 24, 2))
    boxes = []
    for _ in range(int(rng.integers(1, 4))):
        x0, y0 = int(rng.integers(0, W - 1)), int(rng.integers(0, H - 1))
        boxes.append((x0, y0, int(rng.integers(x0 + 1, W + 1)), int(rng.integers(y0 + 1, H + 1))))
    bg = background(W, H, boxes)
    size = (int(rng.integers(1, W + 1)), int(rng.integers(1, H + 1)))
    assert np.array_equal(feasible_region(bg, size, r, "bbox"), feasible_region(bg, size, r, "mask"))


def test_mask_mode_is_not_always_looser():
    # a 1x1 paste on one of three pixels of a sparse 10x10 instance: mask IoU 1/3, box IoU 0.01
    reg = np.zeros((12, 12), bool)
    reg[1, 1] = reg[10, 10] = True
    reg[5, 5] = True
    bg = BackgroundRecord("b", np.zeros((12, 12, 3), np.uint8), (reg,))
    assert feasible_region(bg, (1, 1), 0.3, "bbox")[6, 6]
    assert not feasible_region(bg, (1, 1), 0.3, "mask")[6, 6]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_every_center_keeps_box_inside(seed):
    bg, size, r, pm = random_case(seed)
    region = feasible_region(bg, size, 1.0, "bbox")
    for cy, cx in zip(*np.nonzero(region)):
        x0, y0, x1, y1 = paste_box((cx, cy), size)
        assert 0 <= x0 and 0 <= y0 and x1 <= bg.width and y1 <= bg.height


def test_too_large():
    with pytest.raises(InstanceTooLarge):
        feasible_region(background(10, 10), (11, 3), 0.3)


def test_margins_round_up():
    assert margins((5, 4)) == (3, 2)
    assert paste_box((3, 2), (5, 4)) == (0, 0, 5, 4)


def test_iou_examples():
    assert iou((0, 0, 4, 4), (0, 0, 4, 4)) == 1.0
    assert iou((0, 0, 2, 2), (5, 5, 6, 6)) == 0.0
    assert iou((0, 0, 2, 1), (1, 0, 3, 1)) == pytest.approx(1 / 3)
    a = np.zeros((4, 4), bool)
    b = a.copy()
    a[0, :2] = True
    b[0, 1:3] = True
    assert iou(a, b) == pytest.approx(1 / 3)
    with pytest.raises(BothEmpty):
        iou(np.zeros((2, 2), bool), np.zeros((2, 2), bool))


def test_pick_center_singleton_and_empty():
    region = np.zeros((5, 7), bool)
    region[3, 4] = True
    rng = np.random.default_rng(0)
    assert all(pick_center(region, rng) == (4, 3) for _ in range(20))
    with pytest.raises(EmptyFeasibleRegion):
        pick_center(np.zeros((3, 3), bool), rng)


def test_pick_center_uniform_chi_square():
    region = np.zeros((6, 6), bool)
    cells = [(1, 1), (2, 4), (4, 0), (5, 5)]
    for y, x in cells:
        region[y, x] = True
    rng = np.random.default_rng(12345)
    counts = dict.fromkeys([(x, y) for y, x in cells], 0)
    for _ in range(100_000):
        counts[pick_center(region, rng)] += 1
    assert sps.chisquare(list(counts.values())).pvalue > 0.001


def test_sample_scale_examples():
    rng = np.random.default_rng(0)
    assert all(sample_scale(ClassStats("c", 0.1, 0.0), rng) == 0.1 for _ in range(10))
    assert sample_scale(ClassStats("c", 0.04, 0.0), rng) == 0.05


def test_sample_scale_mean():
    # window at mu +- 4 sigma keeps the truncation bias far below the tolerance
    rng = np.random.default_rng(2024)
    st_ = ClassStats("c", 0.1, 0.0004)
    draws = np.array([sample_scale(st_, rng, 0.02, 0.18) for _ in range(100_000)])
    assert abs(draws.mean() - 0.1) < 3 * 0.02 / math.sqrt(1e5)


def test_sample_scale_matches_truncated_normal():
    # default window cuts at mu - 2.5 sigma, so compare with the analytic truncated mean
    rng = np.random.default_rng(7)
    st_ = ClassStats("c", 0.1, 0.0004)
    draws = np.array([sample_scale(st_, rng, 0.05, 0.95, retry_limit=50) for _ in range(100_000)])
    a, b = (0.05 - 0.1) / 0.02, (0.95 - 0.1) / 0.02
    expected = sps.truncnorm(a, b, loc=0.1, scale=0.02).mean()
    assert abs(draws.mean() - expected) < 4 * 0.02 / math.sqrt(1e5)


def test_sample_scale_stays_in_window():
    rng = np.random.default_rng(1)
    st_ = ClassStats("c", 0.5, 0.25)
    draws = [sample_scale(st_, rng) for _ in range(2000)]
    assert min(draws) >= 0.05 and max(draws) <= 0.95


def test_resize_examples():
    inst = solid_instance(20, 20)
    img, m, f = resize_instance(inst, 0.04, (100, 100))
    assert f == 1.0 and m.shape == (20, 20) and np.array_equal(img, inst.image)
    inst = solid_instance(10, 10)
    img, m, f = resize_instance(inst, 0.04, (100, 100))
    assert f == 2.0 and m.shape == (20, 20)
    inst = solid_instance(4, 4)  # sqrt(196 / 16) = 3.5
    _, m, f = resize_instance(inst, 0.0196, (100, 100), upscale_cap=2.0)
    assert f == 2.0 and m.shape == (8, 8)


def test_resized_mask_is_tight():
    m = np.zeros((9, 9), bool)
    m[0, 4] = m[8, 4] = True
    m[4, :] = True
    inst = InstanceRecord("p", "c", np.zeros((9, 9, 3), np.uint8), m, 0.2)
    _, rm, _ = resize_instance(inst, 0.3, (64, 64))
    assert bbox(rm) == (0, 0, rm.shape[1], rm.shape[0])
