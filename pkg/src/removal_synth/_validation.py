"""Input validation helpers, in the spirit of ``sklearn.utils.validation``.

Images are ``uint8`` arrays shaped ``(H, W)`` or ``(H, W, C)`` with
``C in (1, 3)``; masks are ``bool`` arrays shaped ``(H, W)``.
"""
from __future__ import annotations

import numpy as np

from .exceptions import FrameMismatch


def check_image(image, name="image", copy=False):
    """Return ``image`` as a C-contiguous uint8 array with a channel axis.

    Grayscale ``(H, W)`` input is promoted to ``(H, W, 1)``.
    """
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer) or arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{name} must hold 8-bit samples, got dtype {arr.dtype}")
        arr = arr.astype(np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ValueError(f"{name} must be (H, W), (H, W, 1) or (H, W, 3); got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1")
    if copy:
        return np.array(arr, order="C")
    return np.ascontiguousarray(arr)


def check_mask(mask, name="mask", shape=None):
    """Return ``mask`` as a 2-D bool array, optionally checking its frame."""
    arr = np.asarray(mask)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.dtype != bool:
        arr = arr != 0
    if shape is not None and arr.shape != tuple(shape[:2]):
        raise FrameMismatch(f"{name} has shape {arr.shape}, expected {tuple(shape[:2])}")
    return np.ascontiguousarray(arr)


def check_same_frame(*arrays):
    shapes = {np.shape(a)[:2] for a in arrays}
    if len(shapes) != 1:
        raise FrameMismatch(f"arrays do not share a frame: {sorted(shapes)}")


def check_random_state(rng):
    """Turn ``None``, an int or a Generator into a ``numpy.random.Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None or isinstance(rng, (int, np.integer)):
        return np.random.default_rng(rng)
    raise TypeError(f"cannot build a Generator from {type(rng).__name__}")


def frozen(arr):
    """Mark an array read-only and return it."""
    arr.setflags(write=False)
    return arr


def bbox(mask):
    """Tight bounding box ``(x0, y0, x1, y1)`` of a mask, exclusive upper bounds.

    Returns None for an empty mask.
    """
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.any(axis=0))
    return int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1
