import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from PIL import Image
from skimage.metrics import structural_similarity

from removal_synth.exceptions import DimMismatch, EmptyRegion, PairingError, TooSmall
from removal_synth.metrics import evaluate_directory, mse, psnr, ssim

from scipy import ndimage


def scalar_psnr(a, b):
    vals = [(int(x) - int(y)) ** 2 for x, y in zip(a.ravel().tolist(), b.ravel().tolist())]
    err = math.fsum(vals) / len(vals)
    return math.inf if err == 0 else 10 * math.log10(255**2 / err)


def scalar_ssim(a, b):
    """Direct windowed sums per pixel with reflected borders and the same weights."""
    x = np.arange(11) - 5
    g = np.exp(-(x * x) / (2 * 1.5**2))
    g /= g.sum()
    w = np.outer(g, g)
    c1, c2 = (0.01 * 255) ** 2, (0.03 * 255) ** 2
    H, W, C = a.shape
    vals = []
    for ch in range(C):
        pa = np.pad(a[:, :, ch].astype(float), 5, mode="symmetric")
        pb = np.pad(b[:, :, ch].astype(float), 5, mode="symmetric")
        for i in range(5, H - 5):
            for j in range(5, W - 5):
                wa, wb = pa[i : i + 11, j : j + 11], pb[i : i + 11, j : j + 11]
                ma, mb = (w * wa).sum(), (w * wb).sum()
                va = (w * (wa - ma) ** 2).sum()
                vb = (w * (wb - mb) ** 2).sum()
                cab = (w * (wa - ma) * (wb - mb)).sum()
                vals.append((2 * ma * mb + c1) * (2 * cab + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2)))
    return math.fsum(vals) / len(vals)


def fixture_pairs():
    rng = np.random.default_rng(11)
    pairs = []
    yy, xx = np.mgrid[0:24, 0:28]
    checker = (((yy // 4) + (xx // 4)) % 2 * 255).astype(np.uint8)
    blurred = ndimage.gaussian_filter(checker.astype(float), 1.0).round().astype(np.uint8)
    pairs.append((checker[:, :, None], blurred[:, :, None]))
    for k in range(9):
        c = 3 if k % 2 else 1
        a = rng.integers(0, 256, (20 + k, 22 + k, c), dtype=np.uint8)
        noise = rng.integers(-40, 41, a.shape)
        b = np.clip(a.astype(int) + noise, 0, 255).astype(np.uint8)
        pairs.append((a, b))
    return pairs


@pytest.mark.parametrize("k", range(10))
def test_against_scalar_oracles(k):
    a, b = fixture_pairs()[k]
    assert psnr(a, b) == pytest.approx(scalar_psnr(a, b), rel=1e-9)
    assert abs(ssim(a, b) - scalar_ssim(a, b)) < 1e-6


@pytest.mark.parametrize("k", range(10))
def test_ssim_matches_skimage(k):
    a, b = fixture_pairs()[k]
    ref = structural_similarity(
        a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False, data_range=255, channel_axis=-1
    )
    assert abs(ssim(a, b) - ref) < 1e-6


def test_psnr_examples():
    a = np.full((8, 8, 3), 100, np.uint8)
    assert psnr(a, a) == math.inf
    b = a + 16
    assert mse(a, b) == 256
    assert psnr(a, b) == pytest.approx(10 * math.log10(65025 / 256), abs=1e-12)
    assert round(psnr(a, b), 3) == 24.048
    region = np.zeros((8, 8), bool)
    region[:2] = True
    c = b.copy()
    c[:2] = a[:2]
    assert psnr(a, c, region) == math.inf


def test_ssim_examples():
    a = np.random.default_rng(0).integers(0, 256, (16, 16, 3), dtype=np.uint8)
    assert ssim(a, a) == 1.0
    v = ssim(a, 255 - a)
    assert -1 <= v < 1
    region = np.zeros((16, 16), bool)
    region[3:9, 2:7] = True
    assert ssim(a, a, region) == 1.0


def test_errors():
    a = np.zeros((12, 12, 3), np.uint8)
    with pytest.raises(DimMismatch):
        psnr(a, np.zeros((12, 13, 3), np.uint8))
    with pytest.raises(EmptyRegion):
        psnr(a, a, np.zeros((12, 12), bool))
    with pytest.raises(TooSmall):
        ssim(np.zeros((10, 30, 1), np.uint8), np.zeros((10, 30, 1), np.uint8))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mse_region_additivity(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (15, 13, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (15, 13, 3), dtype=np.uint8)
    part = rng.random((15, 13)) < rng.uniform(0.05, 0.95)
    part[0, 0], part[-1, -1] = True, False
    nm, nu, n = part.sum() * 3, (~part).sum() * 3, a.size
    sm, su, sf = (round(mse(a, b, r) * k) for r, k in ((part, nm), (~part, nu), (None, n)))
    assert sf == sm + su  # integer squared-error totals are additive exactly
    assert math.isclose(mse(a, b), (nm * mse(a, b, part) + nu * mse(a, b, ~part)) / n, rel_tol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (14, 16, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (14, 16, 3), dtype=np.uint8)
    assert psnr(a, b) == psnr(b, a)
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)


def save(d, name, arr):
    os.makedirs(d, exist_ok=True)
    Image.fromarray(arr).save(os.path.join(d, name))


def test_evaluate_directory(tmp_path):
    rng = np.random.default_rng(1)
    gts, res, masks = tmp_path / "gt", tmp_path / "res", tmp_path / "m"
    for k in range(5):
        g = rng.integers(0, 256, (20, 20, 3), dtype=np.uint8)
        r = np.clip(g.astype(int) + rng.integers(-9, 10, g.shape), 0, 255).astype(np.uint8)
        m = np.zeros((20, 20), np.uint8)
        m[5:12, 4:15] = 255
        save(str(gts), f"{k}.png", g)
        save(str(res), f"{k}.png", r)
        save(str(masks), f"{k}.png", m)
    rep = evaluate_directory(str(res), str(gts), str(masks))
    assert [r["stem"] for r in rep.records] == [str(k) for k in range(5)]
    assert rep.aggregate["psnr_full"] == pytest.approx(np.mean([r["psnr_full"] for r in rep.records]))
    assert rep.aggregate["ssim_masked"] == pytest.approx(np.mean([r["ssim_masked"] for r in rep.records]))
    assert rep.to_csv().splitlines()[0] == "stem,PSNR,SSIM,PSNR_masked,SSIM_masked,PSNR_unmasked"
    ident = evaluate_directory(str(gts), str(gts))
    assert all(r["psnr_full"] == math.inf and r["ssim_full"] == 1.0 for r in ident.records)
    assert ident.aggregate["psnr_full"] is None and ident.aggregate["psnr_full_inf_count"] == 5
    assert '"psnr_full": "inf"' in ident.to_jsonl()
    os.remove(os.path.join(str(res), "4.png"))
    with pytest.raises(PairingError):
        evaluate_directory(str(res), str(gts))
