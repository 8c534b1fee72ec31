"""Shared domain records and the per-sample random stream contract.

Rasters are plain numpy arrays (see :mod:`removal_synth._validation`); the
records below bundle them with metadata and are read-only once built.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ._validation import bbox, check_image, check_mask, frozen

_U64 = 2**64


def derive_sample_seed(global_seed: int, sample_index: int) -> int:
    """64-bit seed for sample ``sample_index`` of a run seeded with ``global_seed``.

    Pure and platform independent: numpy's ``SeedSequence`` hashes the pair
    with a fixed mixing function, so streams for different indices are
    independent regardless of the order in which samples are generated.
    """
    seq = np.random.SeedSequence(int(global_seed) % _U64, spawn_key=(int(sample_index) % _U64,))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def sample_rng(global_seed: int, sample_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_sample_seed(global_seed, sample_index)))


class TrimapLabel(enum.IntEnum):
    BACKGROUND = 0
    FOREGROUND = 1
    UNKNOWN = 2


@dataclass(frozen=True, eq=False)
class InstanceRecord:
    """A cropped object: tight image crop, tight mask, class and quality score.

    ``score`` is NaN when the source annotation carried none.
    """

    id: str
    class_label: str
    image: np.ndarray
    mask: np.ndarray
    area_ratio: float
    score: float = math.nan

    def __post_init__(self):
        image = frozen(check_image(self.image, copy=True))
        mask = frozen(check_mask(self.mask).copy())
        if image.shape[:2] != mask.shape:
            raise ValueError(f"instance {self.id}: image {image.shape[:2]} and mask {mask.shape} differ")
        box = bbox(mask)
        if box is None:
            raise ValueError(f"instance {self.id}: empty mask")
        if box != (0, 0, mask.shape[1], mask.shape[0]):
            raise ValueError(f"instance {self.id}: mask is not tight in its crop")
        if not 0.0 < self.area_ratio <= 1.0:
            raise ValueError(f"instance {self.id}: area_ratio {self.area_ratio} outside (0, 1]")
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "area_ratio", float(self.area_ratio))
        object.__setattr__(self, "score", float(self.score))

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @property
    def scored(self) -> bool:
        return not math.isnan(self.score)


@dataclass(frozen=True, eq=False)
class BackgroundRecord:
    """A candidate background with the masks of the instances already in it."""

    id: str
    image: np.ndarray
    instance_regions: tuple = ()
    coverage_ratio: float = field(init=False)

    def __post_init__(self):
        image = frozen(check_image(self.image, copy=True))
        regions = []
        union = np.zeros(image.shape[:2], dtype=bool)
        for region in self.instance_regions:
            region = frozen(check_mask(region, "instance region", shape=image.shape).copy())
            union |= region
            regions.append(region)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "instance_regions", tuple(regions))
        object.__setattr__(self, "coverage_ratio", float(union.sum()) / union.size)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def instance_boxes(self):
        """``(x0, y0, x1, y1)`` boxes of the non-empty instance regions."""
        boxes = (bbox(r) for r in self.instance_regions)
        return [b for b in boxes if b is not None]


@dataclass(frozen=True)
class ClassStats:
    class_label: str
    mu: float
    sigma2: float
    score_threshold: float = math.nan
    count: int = 0

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be non-negative")
        if not 0.0 < self.mu <= 1.0:
            raise ValueError(f"mu {self.mu} outside (0, 1]")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


@dataclass(frozen=True)
class TripletMeta:
    instance_id: str
    background_id: str
    class_label: str
    scale: float
    center: tuple
    size: tuple
    enhancement_type: str
    enhancement_params: dict
    seed: int


@dataclass(frozen=True, eq=False)
class Triplet:
    """One training unit: composite, paste mask, enhanced mask, clean background."""

    input: np.ndarray
    mask: np.ndarray
    enhanced_mask: np.ndarray
    ground_truth: np.ndarray
    meta: TripletMeta

    def __post_init__(self):
        shapes = {self.input.shape[:2], self.mask.shape, self.enhanced_mask.shape, self.ground_truth.shape[:2]}
        if len(shapes) != 1:
            raise ValueError(f"triplet rasters disagree on frame: {shapes}")
        if self.input.shape != self.ground_truth.shape:
            raise ValueError("input and ground truth differ in channel count")
        for name in ("input", "mask", "enhanced_mask", "ground_truth"):
            arr = getattr(self, name)
            if arr.flags.writeable:
                frozen(arr)
