"""End-to-end dataset build, evaluation-split build and dataset validation.

Output layout::

    root/inputs/NNNNNNNN.png          composite with the pasted instance
    root/masks/NNNNNNNN.png           paste mask (0/255)
    root/enhanced_masks/NNNNNNNN.png  deformed mask
    root/gts/NNNNNNNN.png             untouched background
    root/manifest.jsonl               header line, one line per triplet, summary line
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import __version__
from ._validation import bbox
from .annotations import load_annotations, load_backgrounds, load_instances
from .compositing import build_triplet
from .config import PipelineConfig
from .core import derive_sample_seed, sample_rng
from .enhance import EnhancementSpec
from .exceptions import (
    DegenerateResize,
    EmptyFeasibleRegion,
    ExhaustedCorpus,
    InstanceTooLarge,
    InvariantViolation,
)
from .filtering import InstanceFilter, filter_backgrounds, filter_report
from .placement import Placement, feasible_region, iou, margins, paste_box, pick_center, resize_instance, sample_scale
from .raster import dilate, encode_png, erode, pixel_digest, read_png, write_png

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "removal-synth/manifest"
MANIFEST_VERSION = 1
SUBDIRS = ("inputs", "masks", "enhanced_masks", "gts")

SUPERSET_TYPES = ("dilated", "convex_hull", "ellipse", "bbox_bezier")


class SkipSample(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


def check_triplet(triplet, band):
    """Raise InvariantViolation unless the triplet honours the compositing contract."""
    x, gt, m = triplet.input, triplet.ground_truth, triplet.mask
    if not m.any():
        raise InvariantViolation("empty paste mask")
    if (_changed(x, gt) & ~dilate(m, band)).any():
        raise InvariantViolation("input differs from ground truth outside the blend band")
    if not triplet.enhanced_mask.any():
        raise InvariantViolation("empty enhanced mask")


def _changed(x, gt):
    # OR of per-channel planes; much faster than any(axis=2) on interleaved data
    ne = x != gt
    out = ne[:, :, 0].copy()
    for c in range(1, ne.shape[2]):
        out |= ne[:, :, c]
    return out


class CopyPasteSynthesizer(BaseEstimator):
    """Pastes filtered instances onto filtered backgrounds.

    ``fit`` runs the instance and background filters and learns per-class
    size statistics. ``sample(i)`` then produces triplet ``i`` from its own
    random stream, so any subset of indices can be generated in any order.

    ``val_dilate_px`` switches to evaluation mode: no random deformation; the
    enhanced mask is the paste mask dilated by that many pixels (``0`` keeps
    it exact).
    """

    def __init__(self, config=None, val_dilate_px=None):
        self.config = config
        self.val_dilate_px = val_dilate_px

    @property
    def cfg(self) -> PipelineConfig:
        return self.config or PipelineConfig()

    def fit(self, instances, backgrounds):
        cfg = self.cfg
        filt = InstanceFilter.from_config(cfg).fit(list(instances))
        self.thresholds_ = filt.thresholds_
        self.class_stats_ = filt.class_stats_
        self.instances_ = filt.transform(instances)
        self.instance_rejected_ = filt.rejected_
        self.backgrounds_, self.background_rejected_ = filter_backgrounds(list(backgrounds), cfg)
        self.classes_ = sorted({i.class_label for i in self.instances_})
        self._by_class = {c: [i for i in self.instances_ if i.class_label == c] for c in self.classes_}
        return self

    def report(self) -> dict:
        check_is_fitted(self, "instances_")
        return filter_report(
            self.instance_rejected_, self.background_rejected_, self.thresholds_, list(self.class_stats_.values())
        )

    def corpus_digest(self) -> str:
        check_is_fitted(self, "instances_")
        h = hashlib.sha256()
        for inst in self.instances_:
            h.update(f"{inst.id}|{inst.class_label}|{inst.area_ratio!r}|{inst.score!r}|".encode())
            h.update(pixel_digest(inst.image).encode() + pixel_digest(inst.mask).encode())
        for bg in self.backgrounds_:
            h.update(f"{bg.id}|".encode() + pixel_digest(bg.image).encode())
            for region in bg.instance_regions:
                h.update(pixel_digest(region).encode())
        return h.hexdigest()

    def _enhancement(self):
        if self.val_dilate_px is None:
            return None
        if self.val_dilate_px == 0:
            return EnhancementSpec("original")
        return EnhancementSpec.from_params("dilated", self.cfg.enhancement, radius_px=int(self.val_dilate_px))

    def _pick_instance(self, rng):
        if self.cfg.pairing == "class_balanced":
            pool = self._by_class[self.classes_[int(rng.integers(len(self.classes_)))]]
        else:
            pool = self.instances_
        return pool[int(rng.integers(len(pool)))]

    def sample(self, index: int, global_seed: int = None):
        """Triplet for ``index``; raises :class:`SkipSample` when the retry budget runs out."""
        check_is_fitted(self, "instances_")
        cfg = self.cfg
        if not self.instances_ or not self.backgrounds_:
            raise ExhaustedCorpus("no instance or background survived filtering")
        seed_root = cfg.global_seed if global_seed is None else global_seed
        seed = derive_sample_seed(seed_root, index)
        rng = sample_rng(seed_root, index)
        lo, hi = cfg.area_window.min_ratio, cfg.area_window.max_ratio
        reason = "NoAttempt"
        for _ in range(cfg.retry_limit):
            bg = self.backgrounds_[int(rng.integers(len(self.backgrounds_)))]
            inst = self._pick_instance(rng)
            stats = self.class_stats_[inst.class_label]
            for _ in range(cfg.retry_limit):
                s = sample_scale(stats, rng, lo, hi, cfg.retry_limit)
                try:
                    img, m, _ = resize_instance(inst, s, (bg.width, bg.height), cfg.upscale_cap)
                    size = (m.shape[1], m.shape[0])
                    region = feasible_region(bg, size, cfg.iou_threshold, cfg.iou_mode, m)
                    center = pick_center(region, rng)
                except (DegenerateResize, InstanceTooLarge, EmptyFeasibleRegion) as exc:
                    reason = type(exc).__name__
                    continue
                placement = Placement(s, size, center)
                triplet = build_triplet(
                    bg, inst, placement, cfg, rng, enhancement=self._enhancement(), resized=(img, m), seed=seed
                )
                check_triplet(triplet, cfg.trimap_band_px)
                return triplet
        raise SkipSample(reason)

    def generate(self, n: int, global_seed: int = None):
        """Yield ``(index, triplet or None, skip reason or None)`` for ``range(n)``."""
        for i in range(n):
            try:
                yield i, self.sample(i, global_seed), None
            except SkipSample as skip:
                yield i, None, skip.reason


# --- on-disk build -----------------------------------------------------------

_WORKER = {}


def _stem(index):
    return f"{index:08d}"


def _write_sample(index):
    synth, root = _WORKER["synth"], _WORKER["root"]
    cfg = synth.cfg
    try:
        t = synth.sample(index)
    except SkipSample as skip:
        return {"sample_index": index, "skipped": skip.reason}
    stem = _stem(index)
    files = {d: f"{d}/{stem}.png" for d in SUBDIRS}
    write_png(os.path.join(root, files["inputs"]), t.input)
    write_png(os.path.join(root, files["masks"]), t.mask)
    write_png(os.path.join(root, files["enhanced_masks"]), t.enhanced_mask)
    bg_id = t.meta.background_id
    cache = _WORKER.setdefault("gt_cache", {})
    if bg_id not in cache:
        cache[bg_id] = (encode_png(t.ground_truth), pixel_digest(t.ground_truth))
    gt_bytes, gt_digest = cache[bg_id]
    gt_path = os.path.join(root, files["gts"])
    with open(gt_path + ".tmp", "wb") as fh:
        fh.write(gt_bytes)
    os.replace(gt_path + ".tmp", gt_path)
    meta = t.meta
    return {
        "sample_index": index,
        "seed": meta.seed,
        "instance_id": meta.instance_id,
        "background_id": meta.background_id,
        "class": meta.class_label,
        "s": meta.scale,
        "center": list(meta.center),
        "size": list(meta.size),
        "r": cfg.iou_threshold,
        "iou_mode": cfg.iou_mode,
        "enhancement": {"type": meta.enhancement_type, "params": meta.enhancement_params},
        "background_sha256": gt_digest,
        "files": files,
    }


@dataclass
class BuildManifest:
    header: dict
    records: list = field(default_factory=list)
    skips: list = field(default_factory=list)

    @property
    def summary(self) -> dict:
        return {
            "requested": self.header.get("count_requested", len(self.records) + len(self.skips)),
            "emitted": len(self.records),
            "skipped": len(self.skips),
            "skips": self.skips,
        }

    def dumps(self) -> str:
        lines = [json.dumps(self.header, sort_keys=True)]
        lines += [json.dumps(r, sort_keys=True) for r in self.records]
        lines.append(json.dumps({"summary": self.summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())
        os.replace(tmp, path)

    @classmethod
    def read(cls, path) -> "BuildManifest":
        with open(path, "r", encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("schema") != MANIFEST_SCHEMA:
            raise ValueError(f"{path} is not a {MANIFEST_SCHEMA} file")
        header, body = lines[0], lines[1:]
        skips = []
        if body and "summary" in body[-1]:
            skips = body[-1]["summary"].get("skips", [])
            body = body[:-1]
        return cls(header, body, skips)


def _run(indices, workers):
    if workers <= 1:
        return [_write_sample(i) for i in indices]
    # fork shares the fitted synthesizer with the children without pickling it
    ctx = mp.get_context("fork")
    chunk = max(1, len(indices) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(_write_sample, indices, chunksize=chunk))


def build_dataset(
    synth: CopyPasteSynthesizer,
    count: int,
    out_dir,
    workers: int = 1,
    corpus_paths=None,
    split="train",
) -> BuildManifest:
    """Generate ``count`` samples into ``out_dir`` and commit the manifest.

    Output bytes depend only on the config, the corpora and the seed; the
    number of workers does not matter.
    """
    check_is_fitted(synth, "instances_")
    cfg = synth.cfg
    if count > 0 and (not synth.instances_ or not synth.backgrounds_):
        raise ExhaustedCorpus(
            f"{len(synth.instances_)} instances and {len(synth.backgrounds_)} backgrounds survived filtering"
        )
    os.makedirs(out_dir, exist_ok=True)
    for d in SUBDIRS:
        os.makedirs(os.path.join(out_dir, d), exist_ok=True)
    header = {
        "schema": MANIFEST_SCHEMA,
        "schema_version": MANIFEST_VERSION,
        "tool_version": __version__,
        "split": split,
        "val_dilate_px": synth.val_dilate_px,
        "config": cfg.to_dict(),
        "config_hash": cfg.digest(),
        "corpus_hash": synth.corpus_digest(),
        "corpus_paths": dict(corpus_paths or {}),
        "count_requested": int(count),
    }
    _WORKER.clear()
    _WORKER.update(synth=synth, root=os.fspath(out_dir))
    try:
        results = _run(list(range(count)), workers)
    finally:
        _WORKER.clear()
    manifest = BuildManifest(header)
    for res in results:
        if "skipped" in res:
            manifest.skips.append(res)
        else:
            manifest.records.append(res)
    if count > 0 and not manifest.records:
        reasons = sorted({s["skipped"] for s in manifest.skips})
        raise ExhaustedCorpus(f"all {count} samples exhausted their retry budget ({', '.join(reasons)})")
    manifest.write(os.path.join(out_dir, "manifest.jsonl"))
    log.info("built %d triplets, skipped %d", len(manifest.records), len(manifest.skips))
    return manifest


def build_val_split(synth: CopyPasteSynthesizer, count: int, out_dir, dilate_px: int = None, **kw) -> BuildManifest:
    """Evaluation split: exact paste masks, optionally dilated by ``dilate_px``."""
    px = synth.cfg.val_dilate_px if dilate_px is None else dilate_px
    val = copy.copy(synth).set_params(val_dilate_px=int(px))
    return build_dataset(val, count, out_dir, split="val", **kw)


def load_corpora(instances_path, backgrounds_path):
    """Read instance and background annotation files into records."""
    inst_set = load_annotations(instances_path)
    bg_set = load_annotations(backgrounds_path)
    return load_instances(inst_set), load_backgrounds(bg_set), inst_set, bg_set


# --- validation ----------------------------------------------------------------

CHECKS = ("files", "support", "interior_fidelity", "gt_purity", "iou", "margins", "enhancement")


@dataclass
class ValidationReport:
    counts: dict
    failures: list

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"ok": self.ok, "checks": self.counts, "failures": self.failures}


def validate_dataset(manifest_path) -> ValidationReport:
    """Re-check every triplet listed in a manifest against the build contract.

    Checks needing the source corpora (interior fidelity, IoU, purity against
    the source background) are reported as skipped when the corpus files
    recorded in the header are unavailable.
    """
    manifest = BuildManifest.read(manifest_path)
    root = os.path.dirname(os.path.abspath(manifest_path))
    cfg = PipelineConfig.from_dict(manifest.header["config"])
    band = cfg.trimap_band_px
    counts = {c: {"passed": 0, "failed": 0, "skipped": 0} for c in CHECKS}
    failures = []

    instances, backgrounds = {}, {}
    paths = manifest.header.get("corpus_paths") or {}
    try:
        inst_list, bg_list, _, _ = load_corpora(paths["instances"], paths["backgrounds"])
        instances = {i.id: i for i in inst_list}
        backgrounds = {b.id: b for b in bg_list}
    except Exception as exc:  # corpus missing or unreadable: degrade to file-only checks
        log.warning("corpus unavailable, skipping corpus checks: %s", exc)

    def record(check, idx, ok, detail=""):
        if ok is None:
            counts[check]["skipped"] += 1
        elif ok:
            counts[check]["passed"] += 1
        else:
            counts[check]["failed"] += 1
            failures.append({"sample_index": idx, "check": check, "detail": detail})

    for rec in manifest.records:
        idx = rec["sample_index"]
        try:
            x = read_png(os.path.join(root, rec["files"]["inputs"]))
            m = read_png(os.path.join(root, rec["files"]["masks"]), mask=True)
            em = read_png(os.path.join(root, rec["files"]["enhanced_masks"]), mask=True)
            gt = read_png(os.path.join(root, rec["files"]["gts"]))
        except Exception as exc:
            record("files", idx, False, str(exc))
            continue
        record("files", idx, x.shape == gt.shape and m.shape == em.shape == x.shape[:2], "frame mismatch")
        H, W = m.shape

        outside = ~dilate(m, band)
        diff = _changed(x, gt) & outside
        if diff.any():
            ys, xs = np.nonzero(diff)
            record("support", idx, False, f"{len(ys)} pixels differ outside the band, first at ({xs[0]}, {ys[0]})")
        else:
            record("support", idx, True)

        purity = pixel_digest(gt) == rec["background_sha256"]
        bg = backgrounds.get(rec["background_id"])
        if bg is not None:
            purity = purity and np.array_equal(bg.image, gt)
        record("gt_purity", idx, purity, "ground truth differs from the source background")

        size, center = tuple(rec["size"]), tuple(rec["center"])
        ex, ey = margins(size)
        cx, cy = center
        in_margin = ex <= cx <= W - ex and ey <= cy <= H - ey
        record("margins", idx, in_margin, f"center {center} outside [{ex}, {W - ex}]x[{ey}, {H - ey}]")

        inst = instances.get(rec["instance_id"])
        if inst is None or bg is None:
            record("interior_fidelity", idx, None)
            record("iou", idx, None)
        else:
            record("interior_fidelity", idx, *_interior_ok(inst, bg, rec, cfg, x, m))
            r = rec["r"]
            mode = rec.get("iou_mode", cfg.iou_mode)
            worst = 0.0
            box = paste_box(center, size)
            for region in bg.instance_regions:
                if not region.any():
                    continue
                if mode == "bbox":
                    value = iou(box, bbox(region))
                else:
                    value = iou(m, region)
                worst = max(worst, value)
            has_instances = any(region.any() for region in bg.instance_regions)
            record("iou", idx, (not has_instances) or worst < r, f"IoU {worst:.4f} >= r={r}")

        etype = rec["enhancement"]["type"]
        if not em.any():
            law = False
        elif etype == "original":
            law = np.array_equal(em, m)
        elif etype == "eroded":
            law = not (em & ~m).any()
        elif etype in SUPERSET_TYPES:
            law = not (m & ~em).any()
        else:
            law = False
        record("enhancement", idx, law, f"{etype} mask violates its subset/superset law")

    return ValidationReport(counts, failures)


def _interior_ok(inst, bg, rec, cfg, x, m):
    try:
        img, mask, _ = resize_instance(inst, rec["s"], (bg.width, bg.height), cfg.upscale_cap)
    except Exception as exc:
        return False, f"cannot reproduce resized instance: {exc}"
    if (mask.shape[1], mask.shape[0]) != tuple(rec["size"]):
        return False, "resized instance size differs from the record"
    x0, y0, x1, y1 = paste_box(tuple(rec["center"]), tuple(rec["size"]))
    H, W = m.shape
    if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
        return False, "paste box leaves the frame"
    placed = np.zeros_like(m)
    placed[y0:y1, x0:x1] = mask
    if not np.array_equal(placed, m):
        return False, "stored mask differs from the reproduced paste mask"
    if img.shape[2] != x.shape[2]:
        img = np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img.mean(axis=2, keepdims=True).round().astype(np.uint8)
    core = erode(m, cfg.trimap_band_px)
    canvas = np.zeros_like(x)
    canvas[y0:y1, x0:x1] = img
    if not np.array_equal(x[core], canvas[core]):
        return False, "composite does not reproduce the instance inside the eroded mask"
    return True, ""
