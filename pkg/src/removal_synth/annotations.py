"""Instance-segmentation annotation ingest.

File schema (JSON)::

    {
      "images": [{"id": 1, "file": "a.png", "width": 640, "height": 480}],
      "annotations": [
        {"image_id": 1, "class": "dog", "polygon": [[x, y], ...], "score": 0.31},
        {"image_id": 1, "class": "cat",
         "rle": {"counts": [3, 2, 31], "order": "row-major"}}
      ]
    }

``polygon`` is one ring of ``[x, y]`` vertices or a list of rings, in pixel
corner coordinates (``0 <= x <= width``). ``rle`` counts alternate runs of
unset and set pixels, starting with unset, over the raster flattened in
``order`` (``row-major`` or ``column-major``). ``score`` is optional.
Image ``file`` paths are resolved relative to the annotation file.
"""
from __future__ import annotations

import json
import math
import os
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ._validation import bbox, check_image, check_mask
from .core import BackgroundRecord, InstanceRecord
from .exceptions import DegeneratePolygon, EmptyMask, LengthMismatch, SchemaViolation, UnreadableFile
from .raster import fill_polygon, read_png


@dataclass(frozen=True)
class ImageEntry:
    id: str
    file: str
    width: int
    height: int


@dataclass(frozen=True)
class Annotation:
    id: str
    image_id: str
    class_label: str
    region: dict
    score: float = math.nan


@dataclass
class AnnotationSet:
    images: list
    annotations: list
    root: str = "."
    dropped: Counter = field(default_factory=Counter)

    @property
    def n_dropped(self) -> int:
        return sum(self.dropped.values())

    def image(self, image_id) -> ImageEntry:
        return self._index()[str(image_id)]

    def _index(self):
        idx = getattr(self, "_image_index", None)
        if idx is None or len(idx) != len(self.images):
            idx = {im.id: im for im in self.images}
            self._image_index = idx
        return idx

    def image_path(self, entry: ImageEntry) -> str:
        return os.path.join(self.root, entry.file)

    def by_image(self):
        groups = {im.id: [] for im in self.images}
        for ann in self.annotations:
            groups[ann.image_id].append(ann)
        return groups


def _polygon_rings(poly):
    arr = np.asarray(poly, dtype=np.float64)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return [arr]
    if arr.ndim == 1 and arr.size == 0:
        return [arr.reshape(0, 2)]
    rings = []
    for ring in poly:
        r = np.asarray(ring, dtype=np.float64)
        if r.ndim != 2 or r.shape[1] != 2:
            raise ValueError("polygon rings must be lists of [x, y] pairs")
        rings.append(r)
    return rings


def decode_mask(region: dict, width: int, height: int) -> np.ndarray:
    """Decode a ``{"polygon": ...}`` or ``{"rle": ...}`` region to a bool mask.

    Polygons are filled with the even-odd rule at pixel centers. A polygon
    with fewer than three vertices decodes to an empty mask and emits a
    :class:`DegeneratePolygon` warning.
    """
    if "polygon" in region:
        rings = _polygon_rings(region["polygon"])
        usable = [r for r in rings if len(r) >= 3]
        if not usable:
            warnings.warn(DegeneratePolygon("polygon has fewer than 3 vertices"), stacklevel=2)
            return np.zeros((height, width), dtype=bool)
        return fill_polygon(usable, width, height)
    if "rle" in region:
        rle = region["rle"]
        counts = np.asarray(rle["counts"], dtype=np.int64)
        order = rle.get("order", "row-major")
        if counts.ndim != 1 or (counts < 0).any():
            raise ValueError("rle counts must be a flat list of non-negative integers")
        if int(counts.sum()) != width * height:
            raise LengthMismatch(f"rle counts sum to {int(counts.sum())}, raster has {width * height} pixels")
        values = np.zeros(len(counts), dtype=bool)
        values[1::2] = True
        flat = np.repeat(values, counts)
        if order == "row-major":
            return flat.reshape(height, width)
        if order == "column-major":
            return flat.reshape(width, height).T.copy()
        raise ValueError(f"unknown rle order {order!r}")
    raise ValueError("region must carry 'polygon' or 'rle'")


def encode_rle(mask, order: str = "row-major") -> dict:
    """Inverse of the ``rle`` branch of :func:`decode_mask`."""
    mask = check_mask(mask)
    flat = mask.ravel() if order == "row-major" else mask.T.ravel()
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    return {"counts": counts, "order": order}


def _validate_region(region, width, height):
    if "polygon" in region:
        rings = _polygon_rings(region["polygon"])
        if not any(len(r) >= 3 for r in rings):
            return "DegeneratePolygon"
        for r in rings:
            if len(r) and (r[:, 0].min() < 0 or r[:, 0].max() > width or r[:, 1].min() < 0 or r[:, 1].max() > height):
                return "OutOfBounds"
        return None
    if "rle" in region:
        counts = region["rle"].get("counts") if isinstance(region["rle"], dict) else None
        if not isinstance(counts, list) or any(not isinstance(c, int) or c < 0 for c in counts):
            return "BadRLE"
        if sum(counts) != width * height:
            return "LengthMismatch"
        if region["rle"].get("order", "row-major") not in ("row-major", "column-major"):
            return "BadRLE"
        return None
    return "NoRegion"


def load_annotations(path) -> AnnotationSet:
    """Parse and validate an annotation file.

    Structural problems with the document raise :class:`SchemaViolation`;
    individual annotations that are malformed are dropped, and the reasons
    are tallied in ``AnnotationSet.dropped``.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise UnreadableFile(f"cannot read annotation file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list) or not isinstance(doc.get("annotations"), list):
        raise SchemaViolation(f"{path}: expected an object with 'images' and 'annotations' arrays")

    images = []
    for raw in doc["images"]:
        try:
            entry = ImageEntry(str(raw["id"]), str(raw["file"]), int(raw["width"]), int(raw["height"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"{path}: malformed image entry {raw!r}") from exc
        if entry.width < 1 or entry.height < 1:
            raise SchemaViolation(f"{path}: image {entry.id} has non-positive size")
        images.append(entry)
    index = {im.id: im for im in images}
    if len(index) != len(images):
        raise SchemaViolation(f"{path}: duplicate image ids")

    dropped = Counter()
    annotations = []
    for n, raw in enumerate(doc["annotations"]):
        if not isinstance(raw, dict):
            dropped["Malformed"] += 1
            continue
        image_id = str(raw.get("image_id"))
        if image_id not in index:
            dropped["MissingImage"] += 1
            continue
        entry = index[image_id]
        region = {k: raw[k] for k in ("polygon", "rle") if k in raw}
        try:
            reason = _validate_region(region, entry.width, entry.height)
        except (TypeError, ValueError):
            reason = "Malformed"
        if reason:
            dropped[reason] += 1
            continue
        label = raw.get("class", raw.get("class_label"))
        if label is None:
            dropped["NoClass"] += 1
            continue
        score = raw.get("score")
        try:
            score = math.nan if score is None else float(score)
        except (TypeError, ValueError):
            dropped["Malformed"] += 1
            continue
        ann_id = str(raw.get("id", f"{image_id}:{n}"))
        annotations.append(Annotation(ann_id, image_id, str(label), region, score))

    root = os.path.dirname(os.path.abspath(path))
    return AnnotationSet(images, annotations, root, dropped)


def crop_instance(source, mask, class_label, score=math.nan, id="instance") -> InstanceRecord:
    """Cut the tight bounding box of ``mask`` out of ``source``."""
    source = check_image(source)
    mask = check_mask(mask, shape=source.shape)
    box = bbox(mask)
    if box is None:
        raise EmptyMask(f"instance {id} has an empty mask")
    x0, y0, x1, y1 = box
    area = int(mask.sum())
    ratio = area / (source.shape[0] * source.shape[1])
    return InstanceRecord(
        id=str(id),
        class_label=str(class_label),
        image=source[y0:y1, x0:x1],
        mask=mask[y0:y1, x0:x1],
        area_ratio=ratio,
        score=score,
    )


def _load_checked(aset, entry):
    img = read_png(aset.image_path(entry))
    if img.shape[:2] != (entry.height, entry.width):
        raise SchemaViolation(
            f"image {entry.id}: file is {img.shape[1]}x{img.shape[0]}, annotation says {entry.width}x{entry.height}"
        )
    return img


def load_instances(aset: AnnotationSet) -> list:
    """Decode and crop every annotation of ``aset`` into an InstanceRecord.

    Annotations whose region decodes to nothing are skipped and counted in
    ``aset.dropped['EmptyMask']``.
    """
    out = []
    for image_id, anns in aset.by_image().items():
        if not anns:
            continue
        entry = aset.image(image_id)
        img = _load_checked(aset, entry)
        for ann in anns:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegeneratePolygon)
                m = decode_mask(ann.region, entry.width, entry.height)
            if not m.any():
                aset.dropped["EmptyMask"] += 1
                continue
            out.append(crop_instance(img, m, ann.class_label, ann.score, id=ann.id))
    return out


def load_backgrounds(aset: AnnotationSet) -> list:
    """One BackgroundRecord per image; its annotations become instance regions."""
    out = []
    groups = aset.by_image()
    for entry in aset.images:
        img = _load_checked(aset, entry)
        regions = [decode_mask(a.region, entry.width, entry.height) for a in groups[entry.id]]
        out.append(BackgroundRecord(id=entry.id, image=img, instance_regions=tuple(regions)))
    return out
