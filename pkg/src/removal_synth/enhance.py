"""Mask deformations that mimic loose or tight user-drawn masks.

Six types: ``original``, ``eroded``, ``dilated``, ``convex_hull``,
``ellipse`` (minimum-volume enclosing ellipse, slightly expanded) and
``bbox_bezier`` (tight box whose edges bulge outward along cubic curves).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import bbox, check_mask, check_random_state
from .config import ENHANCEMENT_TYPES, EnhancementParams
from .exceptions import EmptyMask
from .raster import dilate, erode, fill_polygon


@dataclass(frozen=True)
class EnhancementSpec:
    type: str = "original"
    erode_frac: float = 0.1
    dilate_frac: float = 0.1
    hull_expand_px: int = 3
    ellipse_expand_factor: float = 1.1
    bezier_jitter_frac: float = 0.1
    radius_px: int | None = None  # fixed erode/dilate radius, overrides the fractions

    def __post_init__(self):
        if self.type not in ENHANCEMENT_TYPES:
            raise ValueError(f"unknown enhancement type {self.type!r}; choose from {ENHANCEMENT_TYPES}")
        # reuse the range checks of the config section
        EnhancementParams(
            erode_frac=self.erode_frac,
            dilate_frac=self.dilate_frac,
            hull_expand_px=self.hull_expand_px,
            ellipse_expand_factor=self.ellipse_expand_factor,
            bezier_jitter_frac=self.bezier_jitter_frac,
        )
        if self.radius_px is not None and self.radius_px < 0:
            raise ValueError("radius_px must be >= 0")

    @classmethod
    def from_params(cls, type, params: EnhancementParams, radius_px=None):
        return cls(
            type=type,
            erode_frac=params.erode_frac,
            dilate_frac=params.dilate_frac,
            hull_expand_px=params.hull_expand_px,
            ellipse_expand_factor=params.ellipse_expand_factor,
            bezier_jitter_frac=params.bezier_jitter_frac,
            radius_px=radius_px,
        )

    def to_dict(self):
        return asdict(self)


def _radius(mask, frac, fixed):
    if fixed is not None:
        return int(fixed)
    x0, y0, x1, y1 = bbox(mask)
    return max(1, int(math.floor(frac * min(x1 - x0, y1 - y0))))


def _boundary_points(mask):
    """Pixel centers that can be extreme points of the set (4-boundary pixels)."""
    padded = np.pad(mask, 1, constant_values=False)
    interior = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    ys, xs = np.nonzero(mask & ~interior)
    return np.column_stack([xs + 0.5, ys + 0.5])


def convex_hull_vertices(points) -> np.ndarray:
    """Counter-clockwise hull (Andrew's monotone chain), collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def rasterize_hull(vertices, shape, eps=1e-9) -> np.ndarray:
    """Pixels whose centers lie in the convex polygon (or segment/point)."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    v = np.asarray(vertices, dtype=np.float64)
    x0 = max(0, int(math.floor(v[:, 0].min())))
    x1 = min(w, int(math.ceil(v[:, 0].max())))
    y0 = max(0, int(math.floor(v[:, 1].min())))
    y1 = min(h, int(math.ceil(v[:, 1].max())))
    yy, xx = np.mgrid[y0:y1, x0:x1]
    px, py = xx + 0.5, yy + 0.5
    if len(v) == 1:
        inside = (px == v[0, 0]) & (py == v[0, 1])
    elif len(v) == 2:
        (ax, ay), (bx, by) = v
        inside = np.abs((bx - ax) * (py - ay) - (by - ay) * (px - ax)) <= eps * max(1.0, abs(bx - ax) + abs(by - ay))
    else:
        inside = np.ones(px.shape, dtype=bool)
        for (ax, ay), (bx, by) in zip(v, np.roll(v, -1, axis=0)):
            inside &= (bx - ax) * (py - ay) - (by - ay) * (px - ax) >= -eps
    out[y0:y1, x0:x1] = inside
    return out


def mvee(points, tol=1e-3, max_iter=10000):
    """Minimum-volume enclosing ellipse by Khachiyan's barycentric iteration.

    Returns ``(A, c)`` with the ellipse ``{x : (x-c)^T A (x-c) <= 1}``. The
    iteration stops once the weight update falls below ``tol``; ``A`` is
    then rescaled so that every input point satisfies the inequality.
    """
    P = np.asarray(points, dtype=np.float64)
    n, d = P.shape
    Q = np.vstack([P.T, np.ones(n)])
    u = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        X = (Q * u) @ Q.T
        M = np.einsum("ij,ji->i", Q.T, np.linalg.solve(X, Q))
        j = int(np.argmax(M))
        step = (M[j] - d - 1.0) / ((d + 1.0) * (M[j] - 1.0))
        new_u = (1.0 - step) * u
        new_u[j] += step
        err = np.linalg.norm(new_u - u)
        u = new_u
        if err < tol:
            break
    c = u @ P
    cov = (P.T * u) @ P - np.outer(c, c)
    A = np.linalg.inv(cov) / d
    diff = P - c
    q = np.einsum("ij,jk,ik->i", diff, A, diff).max()
    return A / q, c


def _ellipse_points(mask):
    pts = _boundary_points(mask)
    hull = convex_hull_vertices(pts)
    if len(hull) >= 3:
        return hull
    # collinear pixels: use pixel corners so the point set spans the plane
    offsets = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    return convex_hull_vertices((pts[:, None, :] + offsets[None]).reshape(-1, 2))


def rasterize_ellipse(A, c, shape, factor=1.0) -> np.ndarray:
    """Pixels whose centers satisfy ``(x-c)^T A (x-c) <= factor^2``."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    half = np.sqrt(np.diag(np.linalg.inv(A))) * factor
    x0 = max(0, int(math.floor(c[0] - half[0])) - 1)
    x1 = min(w, int(math.ceil(c[0] + half[0])) + 1)
    y0 = max(0, int(math.floor(c[1] - half[1])) - 1)
    y1 = min(h, int(math.ceil(c[1] + half[1])) + 1)
    if x0 >= x1 or y0 >= y1:
        return out
    yy, xx = np.mgrid[y0:y1, x0:x1]
    dx, dy = xx + 0.5 - c[0], yy + 0.5 - c[1]
    q = A[0, 0] * dx * dx + 2 * A[0, 1] * dx * dy + A[1, 1] * dy * dy
    out[y0:y1, x0:x1] = q <= factor * factor * (1 + 1e-9)
    return out


def _bezier_outline(box, jitter_frac, rng, samples=24):
    x0, y0, x1, y1 = box
    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)
    normals = np.array([[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=np.float64)
    t = np.linspace(0.0, 1.0, samples, endpoint=False)[:, None]
    outline = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        length = float(np.abs(b - a).sum())
        d1, d2 = rng.uniform(0.0, jitter_frac * length, size=2)
        p1 = a + (b - a) / 3 + normals[k] * d1
        p2 = a + 2 * (b - a) / 3 + normals[k] * d2
        curve = (1 - t) ** 3 * a + 3 * (1 - t) ** 2 * t * p1 + 3 * (1 - t) * t**2 * p2 + t**3 * b
        outline.append(curve)
    return np.vstack(outline)


def enhance_mask(mask, spec: EnhancementSpec, rng=None) -> np.ndarray:
    """Apply one deformation to a non-empty mask; returns a new bool mask."""
    mask = check_mask(mask)
    if not mask.any():
        raise EmptyMask("cannot enhance an empty mask")
    kind = spec.type
    if kind == "original":
        return mask.copy()
    if kind == "eroded":
        out = erode(mask, _radius(mask, spec.erode_frac, spec.radius_px))
        return out if out.any() else mask.copy()
    if kind == "dilated":
        return dilate(mask, _radius(mask, spec.dilate_frac, spec.radius_px))
    if kind == "convex_hull":
        hull = convex_hull_vertices(_boundary_points(mask))
        return dilate(rasterize_hull(hull, mask.shape) | mask, spec.hull_expand_px)
    if kind == "ellipse":
        A, c = mvee(_ellipse_points(mask))
        return rasterize_ellipse(A, c, mask.shape, spec.ellipse_expand_factor)
    if kind == "bbox_bezier":
        rng = check_random_state(rng)
        outline = _bezier_outline(bbox(mask), spec.bezier_jitter_frac, rng)
        return fill_polygon([outline], mask.shape[1], mask.shape[0])
    raise ValueError(f"unknown enhancement type {kind!r}")


def pick_enhancement(rng, weights=None, params: EnhancementParams = None) -> EnhancementSpec:
    """Categorical draw of an enhancement type; uniform when ``weights`` is None."""
    params = params or EnhancementParams()
    w = np.asarray(params.weights if weights is None else weights, dtype=np.float64)
    if w.shape != (len(ENHANCEMENT_TYPES),) or (w < 0).any() or w.sum() <= 0:
        raise ValueError("enhancement weights must be six non-negative numbers with a positive sum")
    rng = check_random_state(rng)
    k = int(rng.choice(len(ENHANCEMENT_TYPES), p=w / w.sum()))
    return EnhancementSpec.from_params(ENHANCEMENT_TYPES[k], params)


class MaskEnhancer(TransformerMixin, BaseEstimator):
    """Transformer that deforms a batch of masks.

    ``kind="random"`` draws a type per mask with ``weights``; any other value
    fixes the type. Stateless: ``fit`` only validates parameters.
    """

    def __init__(
        self,
        kind="random",
        weights=None,
        erode_frac=0.1,
        dilate_frac=0.1,
        hull_expand_px=3,
        ellipse_expand_factor=1.1,
        bezier_jitter_frac=0.1,
        radius_px=None,
        random_state=None,
    ):
        self.kind = kind
        self.weights = weights
        self.erode_frac = erode_frac
        self.dilate_frac = dilate_frac
        self.hull_expand_px = hull_expand_px
        self.ellipse_expand_factor = ellipse_expand_factor
        self.bezier_jitter_frac = bezier_jitter_frac
        self.radius_px = radius_px
        self.random_state = random_state

    def _params(self):
        return EnhancementParams(
            weights=self.weights if self.weights is not None else (1.0,) * len(ENHANCEMENT_TYPES),
            erode_frac=self.erode_frac,
            dilate_frac=self.dilate_frac,
            hull_expand_px=self.hull_expand_px,
            ellipse_expand_factor=self.ellipse_expand_factor,
            bezier_jitter_frac=self.bezier_jitter_frac,
        )

    def fit(self, X=None, y=None):
        self._params()
        if self.kind != "random" and self.kind not in ENHANCEMENT_TYPES:
            raise ValueError(f"unknown kind {self.kind!r}")
        return self

    def transform(self, X):
        params = self._params()
        rng = check_random_state(self.random_state)
        out, types = [], []
        for mask in X:
            if self.kind == "random":
                spec = pick_enhancement(rng, params=params)
                if self.radius_px is not None:
                    spec = EnhancementSpec.from_params(spec.type, params, self.radius_px)
            else:
                spec = EnhancementSpec.from_params(self.kind, params, self.radius_px)
            out.append(enhance_mask(mask, spec, rng))
            types.append(spec.type)
        self.types_ = types
        return out
