"""Raster primitives: disk morphology, polygon fill, PNG I/O.

Coordinates follow the corner convention: pixel ``(row i, col j)`` covers
``[j, j+1) x [i, i+1)`` and its center sits at ``(j + 0.5, i + 0.5)``.
"""
from __future__ import annotations

import hashlib
import io
import os

import numpy as np
from PIL import Image
from scipy import ndimage

from ._validation import bbox, check_image, check_mask
from .exceptions import UnreadableFile


def disk(radius: int) -> np.ndarray:
    """Euclidean disk structuring element: offsets with dx^2 + dy^2 <= r^2."""
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def _roi(mask, pad):
    h, w = mask.shape
    box = bbox(mask)
    if box is None:
        return None
    x0, y0, x1, y1 = box
    return max(0, y0 - pad), min(h, y1 + pad), max(0, x0 - pad), min(w, x1 + pad)


def dilate(mask, radius: int) -> np.ndarray:
    """Binary dilation by a Euclidean disk, clipped to the frame."""
    mask = check_mask(mask)
    r = int(radius)
    if r <= 0:
        return mask.copy()
    out = np.zeros_like(mask)
    roi = _roi(mask, r)
    if roi is None:
        return out
    y0, y1, x0, x1 = roi
    sub = mask[y0:y1, x0:x1]
    # distance to the nearest set pixel; exact, so "<= r" is the disk dilation
    dist = ndimage.distance_transform_edt(~sub)
    out[y0:y1, x0:x1] = dist <= r
    return out


def erode(mask, radius: int) -> np.ndarray:
    """Binary erosion by a Euclidean disk; pixels outside the frame count as unset."""
    mask = check_mask(mask)
    r = int(radius)
    if r <= 0:
        return mask.copy()
    out = np.zeros_like(mask)
    roi = _roi(mask, 1)
    if roi is None:
        return out
    y0, y1, x0, x1 = roi
    sub = np.pad(mask[y0:y1, x0:x1], 1, constant_values=False)
    dist = ndimage.distance_transform_edt(sub)[1:-1, 1:-1]
    out[y0:y1, x0:x1] = dist > r
    return out


def fill_polygon(rings, width: int, height: int) -> np.ndarray:
    """Even-odd fill of one or more closed rings, sampled at pixel centers.

    ``rings`` is a sequence of ``(N, 2)`` vertex arrays in ``(x, y)`` order.
    Rings are combined under the even-odd rule, so nested rings cut holes.
    """
    out = np.zeros((height, width), dtype=bool)
    edges = []
    for ring in rings:
        pts = np.asarray(ring, dtype=np.float64).reshape(-1, 2)
        if len(pts) < 3:
            continue
        nxt = np.roll(pts, -1, axis=0)
        edges.append(np.hstack([pts, nxt]))
    if not edges:
        return out
    e = np.vstack(edges)
    ex0, ey0, ex1, ey1 = e[:, 0], e[:, 1], e[:, 2], e[:, 3]
    ymin, ymax = min(ey0.min(), ey1.min()), max(ey0.max(), ey1.max())
    r0 = max(0, int(np.floor(ymin - 0.5)))
    r1 = min(height, int(np.ceil(ymax - 0.5)) + 1)
    if r0 >= r1:
        return out
    ys = np.arange(r0, r1, dtype=np.float64) + 0.5
    centers_x = np.arange(width, dtype=np.float64) + 0.5
    y = ys[:, None]
    crosses = (ey0[None, :] > y) != (ey1[None, :] > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = (ex1 - ex0)[None, :] * (y - ey0[None, :]) / (ey1 - ey0)[None, :] + ex0[None, :]
    xint = np.where(crosses, xint, np.inf)
    xint.sort(axis=1)
    n_valid = crosses.sum(axis=1)
    for k, row in enumerate(range(r0, r1)):
        n = n_valid[k]
        if n == 0:
            continue
        xs = xint[k, :n]
        # crossings strictly to the right of each center
        right = n - np.searchsorted(xs, centers_x, side="right")
        out[row] = (right & 1).astype(bool)
    return out


def read_png(path, mask=False) -> np.ndarray:
    """Load a PNG as a uint8 image, or as a bool mask (nonzero = set)."""
    try:
        with Image.open(path) as im:
            im.load()
            if mask:
                return np.asarray(im.convert("L")) > 0
            if im.mode not in ("L", "RGB"):
                im = im.convert("RGB")
            return check_image(np.asarray(im), copy=True)
    except (OSError, ValueError) as exc:
        raise UnreadableFile(f"cannot read image {path}: {exc}") from exc


def encode_png(array, compress_level: int = 1) -> bytes:
    arr = np.asarray(array)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG", compress_level=compress_level)
    return buf.getvalue()


def write_png(path, array, compress_level: int = 1) -> None:
    data = encode_png(array, compress_level)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def pixel_digest(array) -> str:
    """SHA-256 over shape and raw samples; independent of file encoding."""
    arr = np.ascontiguousarray(array)
    h = hashlib.sha256(repr(arr.shape).encode())
    h.update(arr.tobytes())
    return h.hexdigest()
