"""Paste-scale sampling, instance resizing and the feasible-center search."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import signal

from ._validation import bbox, check_mask
from .core import BackgroundRecord, ClassStats, InstanceRecord
from .exceptions import BothEmpty, DegenerateResize, EmptyFeasibleRegion, InstanceTooLarge


@dataclass(frozen=True)
class Placement:
    scale: float
    size: tuple  # (w_i, h_i) of the resized, tight instance
    center: tuple  # (cx, cy)

    @property
    def margins(self):
        return margins(self.size)

    @property
    def box(self):
        return paste_box(self.center, self.size)


def margins(size):
    """``(e_x, e_y)``: half the instance box, rounded up."""
    w, h = size
    return (w + 1) // 2, (h + 1) // 2


def paste_box(center, size):
    """Pixel box ``(x0, y0, x1, y1)`` covered when pasting ``size`` at ``center``."""
    (cx, cy), (w, h) = center, size
    ex, ey = margins(size)
    return cx - ex, cy - ey, cx - ex + w, cy - ey + h


def sample_scale(stats: ClassStats, rng, min_ratio=0.05, max_ratio=0.95, retry_limit=8) -> float:
    """Draw from N(mu, sigma^2) truncated to the open window by rejection.

    After ``retry_limit`` rejected draws the last one is clamped to the
    nearest window bound.
    """
    s = stats.mu
    for _ in range(retry_limit):
        s = float(rng.normal(stats.mu, stats.sigma))
        if min_ratio < s < max_ratio:
            return s
    return min(max(s, min_ratio), max_ratio)


def _round(x):
    return int(math.floor(x + 0.5))


def resize_instance(inst: InstanceRecord, scale: float, bg_size, upscale_cap=4.0):
    """Resize ``inst`` so its mask covers about ``scale * W * H`` pixels.

    Returns ``(image, mask, factor)``; the image is resampled bilinearly,
    the mask by nearest neighbour, and both are re-cropped to the tight box
    of the resized mask.
    """
    W, H = bg_size
    target = scale * W * H
    factor = min(math.sqrt(target / inst.area), upscale_cap)
    h, w = inst.mask.shape
    nw, nh = _round(w * factor), _round(h * factor)
    if nw < 1 or nh < 1:
        raise DegenerateResize(f"instance {inst.id} shrinks to {nw}x{nh}")
    if (nw, nh) == (w, h):
        return inst.image.copy(), inst.mask.copy(), factor
    img = inst.image
    if img.shape[2] == 1:
        resized = np.asarray(Image.fromarray(img[:, :, 0]).resize((nw, nh), Image.BILINEAR))[:, :, None]
    else:
        resized = np.asarray(Image.fromarray(img).resize((nw, nh), Image.BILINEAR))
    m = np.asarray(Image.fromarray(inst.mask.astype(np.uint8) * 255).resize((nw, nh), Image.NEAREST)) > 0
    box = bbox(m)
    if box is None:
        raise DegenerateResize(f"instance {inst.id} mask vanished at {nw}x{nh}")
    x0, y0, x1, y1 = box
    return np.ascontiguousarray(resized[y0:y1, x0:x1]), np.ascontiguousarray(m[y0:y1, x0:x1]), factor


def _as_box(region):
    if isinstance(region, tuple) and len(region) == 4:
        return region
    return None


def iou(a, b) -> float:
    """Intersection over union of two masks (same frame) or two boxes."""
    ba, bb = _as_box(a), _as_box(b)
    if ba is not None and bb is not None:
        area_a = max(0, ba[2] - ba[0]) * max(0, ba[3] - ba[1])
        area_b = max(0, bb[2] - bb[0]) * max(0, bb[3] - bb[1])
        iw = max(0, min(ba[2], bb[2]) - max(ba[0], bb[0]))
        ih = max(0, min(ba[3], bb[3]) - max(ba[1], bb[1]))
        inter = iw * ih
        union = area_a + area_b - inter
    else:
        ma, mb = check_mask(a), check_mask(b)
        if ma.shape != mb.shape:
            raise ValueError("masks must share a frame")
        inter = int(np.logical_and(ma, mb).sum())
        union = int(np.logical_or(ma, mb).sum())
    if union == 0:
        raise BothEmpty("IoU of two empty regions is undefined")
    return inter / union


def margin_region(bg_size, size) -> np.ndarray:
    """Centers whose paste box stays inside the frame, as an ``(H, W)`` bitmap."""
    W, H = bg_size
    w, h = size
    if w > W or h > H:
        raise InstanceTooLarge(f"instance {w}x{h} does not fit background {W}x{H}")
    ex, ey = margins(size)
    out = np.zeros((H, W), dtype=bool)
    out[ey : H - ey + 1, ex : W - ex + 1] = True
    return out


def _overlap_1d(starts, length, lo, hi):
    return np.clip(np.minimum(starts + length, hi) - np.maximum(starts, lo), 0, None)


def feasible_region(bg: BackgroundRecord, size, r: float, mode="bbox", pasted_mask=None) -> np.ndarray:
    """Bitmap over integer centers ``[cy, cx]`` where the paste is admissible.

    A center is feasible when the paste box lies inside the frame and its
    IoU with every existing instance is strictly below ``r``. In ``bbox``
    mode the paste box is compared with instance boxes; in ``mask`` mode the
    placed ``pasted_mask`` (tight, ``size``-shaped) with instance masks.
    """
    W, H = bg.width, bg.height
    w, h = size
    region = margin_region((W, H), size)
    ex, ey = margins(size)
    if mode == "bbox":
        left = np.arange(W) - ex
        top = np.arange(H) - ey
        for bx0, by0, bx1, by1 in bg.instance_boxes():
            ix = _overlap_1d(left, w, bx0, bx1)
            iy = _overlap_1d(top, h, by0, by1)
            cols, rows = np.flatnonzero(ix), np.flatnonzero(iy)
            if not 0.0 < r:
                # IoU is never negative, so r = 0 rejects every center
                region[:] = False
                break
            if cols.size == 0 or rows.size == 0:
                continue
            # only centers with a non-empty overlap can reach IoU >= r > 0
            c0, c1, r0, r1 = cols[0], cols[-1] + 1, rows[0], rows[-1] + 1
            inter = iy[r0:r1, None] * ix[None, c0:c1]
            union = w * h + (bx1 - bx0) * (by1 - by0) - inter
            region[r0:r1, c0:c1] &= inter / union < r
    elif mode == "mask":
        if pasted_mask is None:
            pasted_mask = np.ones((h, w), dtype=bool)
        pasted_mask = check_mask(pasted_mask)
        if pasted_mask.shape != (h, w):
            raise ValueError("pasted_mask shape does not match size")
        p_area = int(pasted_mask.sum())
        kernel = pasted_mask[::-1, ::-1].astype(np.float64)
        for inst in bg.instance_regions:
            i_area = int(inst.sum())
            if i_area == 0:
                continue
            # valid correlation: entry [top, left] counts overlap of the paste at that corner
            corr = signal.fftconvolve(inst.astype(np.float64), kernel, mode="valid")
            inter = np.rint(corr).astype(np.int64)
            ok = np.zeros((H, W), dtype=bool)
            passes = (inter / (p_area + i_area - inter) < r)[: H - ey, : W - ex]
            ok[ey : ey + passes.shape[0], ex : ex + passes.shape[1]] = passes
            region &= ok
    else:
        raise ValueError(f"unknown IoU mode {mode!r}")
    return region


def pick_center(region, rng):
    """Uniform draw ``(cx, cy)`` among the set entries of ``region``."""
    flat = np.flatnonzero(region)
    if flat.size == 0:
        raise EmptyFeasibleRegion("no feasible paste center")
    k = flat[int(rng.integers(flat.size))]
    cy, cx = divmod(int(k), region.shape[1])
    return cx, cy
