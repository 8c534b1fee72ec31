"""Trimap, alpha ramp and alpha blending of a placed instance."""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ._validation import check_image, check_mask, check_random_state
from .config import PipelineConfig
from .core import BackgroundRecord, InstanceRecord, Triplet, TripletMeta, TrimapLabel
from .enhance import EnhancementSpec, enhance_mask, pick_enhancement
from .exceptions import FrameMismatch
from .placement import Placement, paste_box, resize_instance
from .raster import dilate, erode

FG, BG, UNKNOWN = TrimapLabel.FOREGROUND, TrimapLabel.BACKGROUND, TrimapLabel.UNKNOWN


def make_trimap(mask, band: int) -> np.ndarray:
    """Label pixels Foreground (eroded mask), Background (outside the dilated
    mask) or Unknown (the band in between), using disks of radius ``band``."""
    mask = check_mask(mask)
    if band < 0:
        raise ValueError("band must be >= 0")
    trimap = np.full(mask.shape, UNKNOWN, dtype=np.uint8)
    trimap[erode(mask, band)] = FG
    trimap[~dilate(mask, band)] = BG
    return trimap


def solve_alpha(trimap) -> np.ndarray:
    """Distance-ramp alpha: ``d_bg / (d_bg + d_fg)`` on the Unknown band.

    ``d_fg`` and ``d_bg`` are exact Euclidean distances to the nearest
    Foreground and Background pixel. Alpha is 1 on Foreground, 0 on
    Background, and 0 on Unknown when there is no Foreground at all.
    """
    trimap = np.asarray(trimap)
    fg, bg = trimap == FG, trimap == BG
    alpha = fg.astype(np.float64)
    unknown = ~(fg | bg)
    if not unknown.any() or not fg.any():
        return alpha
    d_fg = ndimage.distance_transform_edt(~fg)[unknown]
    if bg.any():
        d_bg = ndimage.distance_transform_edt(~bg)[unknown]
        alpha[unknown] = d_bg / (d_bg + d_fg)
    else:
        alpha[unknown] = 1.0
    return np.clip(alpha, 0.0, 1.0)


def blend(background, placed, alpha) -> np.ndarray:
    """``alpha * placed + (1 - alpha) * background``, rounded half away from zero."""
    background = check_image(background, "background")
    placed = check_image(placed, "placed instance")
    alpha = np.asarray(alpha, dtype=np.float64)
    if background.shape != placed.shape or alpha.shape != background.shape[:2]:
        raise FrameMismatch(
            f"background {background.shape}, instance {placed.shape} and alpha {alpha.shape} disagree"
        )
    a = alpha[:, :, None]
    mixed = a * placed + (1.0 - a) * background
    return np.floor(mixed + 0.5).astype(np.uint8)


def place_instance(frame_shape, image, mask, center):
    """Put a tight instance into a frame at ``center``.

    Returns ``(placed_image, placed_mask)``. Outside the mask the placed
    image repeats the color of the nearest mask pixel, so that feathered
    edges blend object color rather than the instance's source backdrop.
    """
    H, W = frame_shape[:2]
    image = check_image(image)
    mask = check_mask(mask, shape=image.shape)
    h, w = mask.shape
    x0, y0, x1, y1 = paste_box(center, (w, h))
    if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
        raise FrameMismatch(f"paste box {(x0, y0, x1, y1)} leaves the {W}x{H} frame")
    placed_mask = np.zeros((H, W), dtype=bool)
    placed_mask[y0:y1, x0:x1] = mask
    _, (iy, ix) = ndimage.distance_transform_edt(~placed_mask, return_indices=True)
    canvas = np.zeros((H, W, image.shape[2]), dtype=np.uint8)
    canvas[y0:y1, x0:x1] = image
    return canvas[iy, ix], placed_mask


def composite(background, image, mask, center, band):
    """Blend a tight instance onto ``background``; returns ``(x, placed_mask)``.

    Equivalent to ``blend(background, *place_instance(...), alpha)`` with the
    alpha of ``make_trimap(placed_mask, band)``, but work is confined to the
    paste box grown by ``band + 1`` pixels: every pixel outside that window
    has alpha 0, and nearest-set distances inside it are unaffected by the
    crop. One distance transform serves both the dilation and the color
    extension.
    """
    background = check_image(background)
    image = check_image(image)
    mask = check_mask(mask, shape=image.shape)
    H, W = background.shape[:2]
    h, w = mask.shape
    x0, y0, x1, y1 = paste_box(center, (w, h))
    if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
        raise FrameMismatch(f"paste box {(x0, y0, x1, y1)} leaves the {W}x{H} frame")
    pad = band + 1
    rx0, ry0, rx1, ry1 = max(0, x0 - pad), max(0, y0 - pad), min(W, x1 + pad), min(H, y1 + pad)
    local = np.zeros((ry1 - ry0, rx1 - rx0), dtype=bool)
    local[y0 - ry0 : y1 - ry0, x0 - rx0 : x1 - rx0] = mask
    d_out, (iy, ix) = ndimage.distance_transform_edt(~local, return_indices=True)
    canvas = np.zeros(local.shape + (image.shape[2],), dtype=np.uint8)
    canvas[y0 - ry0 : y1 - ry0, x0 - rx0 : x1 - rx0] = image
    placed = canvas[iy, ix]
    trimap = np.full(local.shape, UNKNOWN, dtype=np.uint8)
    if band > 0:
        d_in = ndimage.distance_transform_edt(np.pad(local, 1))[1:-1, 1:-1]
        trimap[d_in > band] = FG
        trimap[d_out > band] = BG
    else:
        trimap[local] = FG
        trimap[~local] = BG
    alpha = solve_alpha(trimap)
    out = background.copy()
    out[ry0:ry1, rx0:rx1] = blend(background[ry0:ry1, rx0:rx1], placed, alpha)
    full_mask = np.zeros((H, W), dtype=bool)
    full_mask[ry0:ry1, rx0:rx1] = local
    return out, full_mask


def build_triplet(
    bg: BackgroundRecord,
    inst: InstanceRecord,
    placement: Placement,
    cfg: PipelineConfig = None,
    rng=None,
    enhancement: EnhancementSpec = None,
    resized=None,
    seed: int = 0,
) -> Triplet:
    """Compose trimap, alpha and blend into a Triplet.

    ``resized`` may carry the ``(image, mask)`` already produced by
    :func:`resize_instance` for ``placement.scale``; otherwise it is
    recomputed. When ``enhancement`` is None a type is drawn from ``rng``.
    """
    cfg = cfg or PipelineConfig()
    rng = check_random_state(rng)
    if resized is None:
        img, m, _ = resize_instance(inst, placement.scale, (bg.width, bg.height), cfg.upscale_cap)
    else:
        img, m = resized
    if (m.shape[1], m.shape[0]) != tuple(placement.size):
        raise FrameMismatch(f"resized instance is {m.shape[1]}x{m.shape[0]}, placement says {placement.size}")
    bg_img = bg.image
    if img.shape[2] != bg_img.shape[2]:
        img = np.repeat(img, 3, axis=2) if img.shape[2] == 1 else img.mean(axis=2, keepdims=True).round().astype(np.uint8)
    x, pasted = composite(bg_img, img, m, placement.center, cfg.trimap_band_px)
    if enhancement is None:
        enhancement = pick_enhancement(rng, params=cfg.enhancement)
    enhanced = enhance_mask(pasted, enhancement, rng)
    meta = TripletMeta(
        instance_id=inst.id,
        background_id=bg.id,
        class_label=inst.class_label,
        scale=float(placement.scale),
        center=tuple(int(v) for v in placement.center),
        size=tuple(int(v) for v in placement.size),
        enhancement_type=enhancement.type,
        enhancement_params=enhancement.to_dict(),
        seed=int(seed),
    )
    return Triplet(input=x, mask=pasted, enhanced_mask=enhanced, ground_truth=bg_img, meta=meta)
