"""PSNR and SSIM for removal results, full-frame and region-restricted."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ._validation import check_image, check_mask
from .exceptions import DimMismatch, EmptyRegion, PairingError, TooSmall
from .raster import read_png

INF = math.inf
_WIN = 11
_SIGMA = 1.5
_K1, _K2, _L = 0.01, 0.03, 255.0


def _pair(a, b):
    a, b = check_image(a, "a"), check_image(b, "b")
    if a.shape != b.shape:
        raise DimMismatch(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def _region(region, shape):
    if region is None:
        return None
    region = check_mask(region, "region")
    if region.shape != shape[:2]:
        raise DimMismatch(f"region {region.shape} does not match image {shape[:2]}")
    if not region.any():
        raise EmptyRegion("region has no pixels")
    return region


def mse(a, b, region=None) -> float:
    a, b = _pair(a, b)
    region = _region(region, a.shape)
    diff = a.astype(np.int64) - b.astype(np.int64)
    sq = diff * diff
    if region is not None:
        sq = sq[region]
    # integer total, one rounding at the division
    return int(sq.sum()) / sq.size


def psnr(a, b, region=None) -> float:
    """PSNR in dB on the 0-255 scale; ``math.inf`` when the images agree."""
    err = mse(a, b, region)
    if err == 0:
        return INF
    return 10.0 * math.log10(_L * _L / err)


def _gaussian_taps():
    x = np.arange(_WIN, dtype=np.float64) - _WIN // 2
    g = np.exp(-(x * x) / (2 * _SIGMA * _SIGMA))
    return g / g.sum()


def _smooth(img, taps):
    out = ndimage.correlate1d(img, taps, axis=0, mode="reflect")
    return ndimage.correlate1d(out, taps, axis=1, mode="reflect")


def ssim_map(a, b) -> np.ndarray:
    """Per-pixel SSIM, ``(H, W, C)``, with an 11x11 Gaussian window (sigma 1.5).

    Local statistics are population moments under the window; borders are
    reflected.
    """
    a, b = _pair(a, b)
    if min(a.shape[:2]) < _WIN:
        raise TooSmall(f"SSIM needs at least {_WIN}x{_WIN} pixels, got {a.shape[1]}x{a.shape[0]}")
    taps = _gaussian_taps()
    c1, c2 = (_K1 * _L) ** 2, (_K2 * _L) ** 2
    maps = []
    for ch in range(a.shape[2]):
        x = a[:, :, ch].astype(np.float64)
        y = b[:, :, ch].astype(np.float64)
        mx, my = _smooth(x, taps), _smooth(y, taps)
        vx = _smooth(x * x, taps) - mx * mx
        vy = _smooth(y * y, taps) - my * my
        cxy = _smooth(x * y, taps) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        maps.append(num / den)
    return np.stack(maps, axis=2)


def ssim(a, b, region=None) -> float:
    """Mean SSIM, averaged over channels.

    Full-frame SSIM averages window centers at least 5 px from the border.
    With ``region``, centers inside the region are averaged; if none of them
    is that far from the border, all region centers are used.
    """
    a, b = _pair(a, b)
    region = _region(region, a.shape)
    smap = ssim_map(a, b)
    r = _WIN // 2
    interior = np.zeros(a.shape[:2], dtype=bool)
    interior[r:-r, r:-r] = True
    sel = interior if region is None else region & interior
    if region is not None and not sel.any():
        sel = region
    return float(np.clip(smap[sel].mean(), -1.0, 1.0))


@dataclass
class MetricReport:
    records: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    FIELDS = ("psnr_full", "ssim_full", "psnr_masked", "ssim_masked", "psnr_unmasked")

    def to_jsonl(self) -> str:
        lines = [json.dumps({"stem": r["stem"], **{k: _fmt(r.get(k)) for k in self.FIELDS}}) for r in self.records]
        lines.append(json.dumps({"aggregate": {k: _fmt(v) for k, v in self.aggregate.items()}}))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["stem", "PSNR", "SSIM", "PSNR_masked", "SSIM_masked", "PSNR_unmasked"])
        for r in self.records:
            writer.writerow([r["stem"]] + [_fmt(r.get(k)) for k in self.FIELDS])
        writer.writerow(["mean"] + [_fmt(self.aggregate.get(k)) for k in self.FIELDS])
        return buf.getvalue()


def _fmt(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return v


def _stems(directory):
    if not os.path.isdir(directory):
        raise PairingError(f"{directory} is not a directory")
    return {os.path.splitext(f)[0]: os.path.join(directory, f) for f in sorted(os.listdir(directory)) if f.lower().endswith(".png")}


def _aggregate(records):
    agg = {}
    for key in MetricReport.FIELDS:
        vals = [r[key] for r in records if r.get(key) is not None]
        finite = [v for v in vals if not math.isinf(v)]
        agg[key] = math.fsum(finite) / len(finite) if finite else None
        if key.startswith("psnr"):
            agg[f"{key}_inf_count"] = len(vals) - len(finite)
    agg["count"] = len(records)
    return agg


def evaluate_pair(result, truth, mask=None) -> dict:
    rec = {"psnr_full": psnr(result, truth), "ssim_full": ssim(result, truth)}
    if mask is not None and mask.any():
        rec["psnr_masked"] = psnr(result, truth, mask)
        rec["ssim_masked"] = ssim(result, truth, mask)
        if not mask.all():
            rec["psnr_unmasked"] = psnr(result, truth, ~mask)
    return rec


def evaluate_directory(results_dir, truth_dir, masks_dir=None) -> MetricReport:
    """Pair PNGs by file stem and score each result against its ground truth.

    Infinite PSNRs are left out of the aggregate means and counted in
    ``<metric>_inf_count`` instead.
    """
    res, gts = _stems(results_dir), _stems(truth_dir)
    if set(res) != set(gts):
        missing = sorted(set(res) ^ set(gts))
        raise PairingError(f"unmatched stems between {results_dir} and {truth_dir}: {missing[:10]}")
    masks = None
    if masks_dir is not None:
        masks = _stems(masks_dir)
        if not set(res) <= set(masks):
            raise PairingError(f"masks missing for stems: {sorted(set(res) - set(masks))[:10]}")
    records = []
    for stem in sorted(res):
        a, b = read_png(res[stem]), read_png(gts[stem])
        if a.shape != b.shape:
            if a.shape[:2] != b.shape[:2]:
                raise DimMismatch(f"{stem}: result {a.shape} vs ground truth {b.shape}")
            a, b = (np.repeat(a, 3, axis=2), b) if a.shape[2] == 1 else (a, np.repeat(b, 3, axis=2))
        m = read_png(masks[stem], mask=True) if masks is not None else None
        records.append({"stem": stem, **evaluate_pair(a, b, m)})
    return MetricReport(records, _aggregate(records))
