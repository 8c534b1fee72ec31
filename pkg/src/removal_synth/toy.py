"""Deterministic synthetic corpus for demos, tests and benchmarks.

``make_toy_corpus`` writes smooth procedural backgrounds with a few
annotated "existing" objects, plus small source images each holding one
annotated object, together with the two annotation files.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .annotations import encode_rle
from .raster import fill_polygon, write_png

CLASSES = ("blob", "box", "star")


def _backdrop(rng, h, w):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    base = rng.uniform(40, 200, size=3)
    gx, gy = rng.uniform(-0.15, 0.15, size=(2, 3))
    fx, fy = rng.uniform(0.005, 0.03, size=2)
    wave = 18 * np.sin(fx * xx + fy * yy)
    img = base + gx * xx[..., None] + gy * yy[..., None] + wave[..., None]
    return np.clip(img, 0, 255).round().astype(np.uint8)


def _ellipse_ring(cx, cy, rx, ry, n=32, wobble=0.0, rng=None):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    k = 1.0 + (wobble * rng.uniform(-1, 1, size=n) if wobble else 0.0)
    return np.column_stack([cx + rx * k * np.cos(t), cy + ry * k * np.sin(t)])


def _star_ring(cx, cy, r_out, r_in, points=5, phase=0.0):
    t = phase + np.arange(2 * points) * np.pi / points
    r = np.where(np.arange(2 * points) % 2 == 0, r_out, r_in)
    return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])


def _shape(rng, label, cx, cy, size):
    if label == "box":
        w, h = size * rng.uniform(0.6, 1.0), size * rng.uniform(0.6, 1.0)
        return np.array([[cx - w, cy - h], [cx + w, cy - h], [cx + w, cy + h], [cx - w, cy + h]])
    if label == "star":
        return _star_ring(cx, cy, size, size * rng.uniform(0.4, 0.6), phase=rng.uniform(0, np.pi))
    return _ellipse_ring(cx, cy, size * rng.uniform(0.7, 1.0), size * rng.uniform(0.7, 1.0), wobble=0.15, rng=rng)


def _paint(img, mask, color, rng):
    ys, xs = np.nonzero(mask)
    g = rng.uniform(-0.6, 0.6, size=(2, 3))
    shade = color + (xs - xs.mean())[:, None] * g[0] + (ys - ys.mean())[:, None] * g[1]
    img[mask] = np.clip(shade, 0, 255).round().astype(np.uint8)


def _clip_ring(ring, w, h):
    ring = np.asarray(ring, dtype=np.float64)
    ring[:, 0] = ring[:, 0].clip(0, w)
    ring[:, 1] = ring[:, 1].clip(0, h)
    return ring


def make_toy_corpus(root, n_backgrounds=20, n_instances=12, bg_size=(512, 512), src_size=128, seed=0):
    """Write a toy corpus under ``root``; returns ``(instances_json, backgrounds_json)``.

    Two extra backgrounds that fail the default background filter (too small,
    too elongated) and three extra instances that fail the instance filter
    (tiny, huge, low score) are included to exercise the filters.
    """
    rng = np.random.default_rng(seed)
    os.makedirs(os.path.join(root, "backgrounds"), exist_ok=True)
    os.makedirs(os.path.join(root, "instances"), exist_ok=True)
    W, H = bg_size

    bg_doc = {"images": [], "annotations": []}
    sizes = [(W, H)] * n_backgrounds + [(W, 400), (int(W * 2.2), H)]
    for i, (w, h) in enumerate(sizes):
        img = _backdrop(rng, h, w)
        name = f"bg_{i:03d}.png"
        bg_doc["images"].append({"id": f"bg{i:03d}", "file": f"backgrounds/{name}", "width": w, "height": h})
        for j in range(int(rng.integers(1, 4))):
            label = CLASSES[int(rng.integers(len(CLASSES)))]
            size = rng.uniform(0.06, 0.12) * min(w, h)
            cx, cy = rng.uniform(size, w - size), rng.uniform(size, h - size)
            ring = _clip_ring(_shape(rng, label, cx, cy, size), w, h)
            mask = fill_polygon([ring], w, h)
            _paint(img, mask, rng.uniform(0, 255, size=3), rng)
            ann = {"image_id": f"bg{i:03d}", "class": label}
            if j % 2:
                ann["rle"] = encode_rle(mask)
            else:
                ann["polygon"] = ring.round(3).tolist()
            bg_doc["annotations"].append(ann)
        write_png(os.path.join(root, "backgrounds", name), img)

    inst_doc = {"images": [], "annotations": []}
    specs = [(CLASSES[k % len(CLASSES)], rng.uniform(0.25, 0.4), 0.3) for k in range(n_instances)]
    specs += [("blob", 0.08, 0.3), ("box", 0.5, 0.3), ("star", 0.3, 0.05)]
    for k, (label, rel, score) in enumerate(specs):
        s = src_size
        img = _backdrop(rng, s, s)
        if label == "box" and rel >= 0.5:
            # covers the whole frame: area ratio above the 95% cut
            ring = np.array([[0, 0], [s, 0], [s, s], [0, s]], dtype=np.float64)
        else:
            ring = _clip_ring(_shape(rng, label, s / 2, s / 2, rel * s), s, s)
        mask = fill_polygon([ring], s, s)
        _paint(img, mask, rng.uniform(0, 255, size=3), rng)
        name = f"src_{k:03d}.png"
        inst_doc["images"].append({"id": f"src{k:03d}", "file": f"instances/{name}", "width": s, "height": s})
        inst_doc["annotations"].append(
            {"id": f"inst{k:03d}", "image_id": f"src{k:03d}", "class": label, "polygon": ring.round(3).tolist(), "score": score}
        )
        write_png(os.path.join(root, "instances", name), img)

    inst_path = os.path.join(root, "instances.json")
    bg_path = os.path.join(root, "backgrounds.json")
    with open(inst_path, "w", encoding="utf-8") as fh:
        json.dump(inst_doc, fh)
    with open(bg_path, "w", encoding="utf-8") as fh:
        json.dump(bg_doc, fh)
    return inst_path, bg_path
