"""Pipeline configuration and its TOML file mapping."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .exceptions import SchemaViolation, UnreadableFile

CONFIG_ENV_VAR = "REMOVAL_SYNTH_CONFIG"

ENHANCEMENT_TYPES = ("original", "eroded", "dilated", "convex_hull", "ellipse", "bbox_bezier")


@dataclass(frozen=True)
class ScoreParams:
    b: float = 0.2
    d: float = 0.02


@dataclass(frozen=True)
class AreaWindow:
    min_ratio: float = 0.05
    max_ratio: float = 0.95


@dataclass(frozen=True)
class BackgroundRules:
    min_side: int = 512
    max_aspect: float = 2.0
    max_coverage: float = 0.85


@dataclass(frozen=True)
class EnhancementParams:
    weights: tuple = (1.0, 1.0, 1.0, 1.0, 1.0, 1.0)
    erode_frac: float = 0.1
    dilate_frac: float = 0.1
    hull_expand_px: int = 3
    ellipse_expand_factor: float = 1.1
    bezier_jitter_frac: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != len(ENHANCEMENT_TYPES):
            raise ValueError(f"need {len(ENHANCEMENT_TYPES)} enhancement weights")
        for name in ("erode_frac", "dilate_frac", "bezier_jitter_frac"):
            if not 0.0 <= getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5]")
        if self.ellipse_expand_factor < 1.0:
            raise ValueError("ellipse_expand_factor must be >= 1")
        if self.hull_expand_px < 0:
            raise ValueError("hull_expand_px must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    iou_threshold: float = 0.3
    iou_mode: str = "bbox"
    score_params: ScoreParams = field(default_factory=ScoreParams)
    score_provider: str = "annotation"
    area_window: AreaWindow = field(default_factory=AreaWindow)
    background_rules: BackgroundRules = field(default_factory=BackgroundRules)
    trimap_band_px: int = 5
    upscale_cap: float = 4.0
    retry_limit: int = 8
    enhancement: EnhancementParams = field(default_factory=EnhancementParams)
    pairing: str = "uniform"
    val_dilate_px: int = 3
    global_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must lie in [0, 1]")
        if self.iou_mode not in ("bbox", "mask"):
            raise ValueError("iou_mode must be 'bbox' or 'mask'")
        if self.score_provider not in ("annotation", "stub"):
            raise ValueError("score_provider must be 'annotation' or 'stub'")
        if not 0.0 <= self.area_window.min_ratio < self.area_window.max_ratio <= 1.0:
            raise ValueError("area window must satisfy 0 <= min_ratio < max_ratio <= 1")
        if self.retry_limit < 1:
            raise ValueError("retry_limit must be >= 1")
        if self.trimap_band_px < 0:
            raise ValueError("trimap_band_px must be >= 0")
        if self.upscale_cap <= 0:
            raise ValueError("upscale_cap must be positive")
        if self.pairing not in ("uniform", "class_balanced"):
            raise ValueError("pairing must be 'uniform' or 'class_balanced'")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["enhancement"]["weights"] = list(d["enhancement"]["weights"])
        return d

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        nested = {
            "score_params": ScoreParams,
            "area_window": AreaWindow,
            "background_rules": BackgroundRules,
            "enhancement": EnhancementParams,
        }
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SchemaViolation(f"unknown config keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in data.items():
            if key in nested:
                if not isinstance(value, dict):
                    raise SchemaViolation(f"config section {key!r} must be a table")
                sub = nested[key]
                sub_known = {f.name for f in dataclasses.fields(sub)}
                bad = set(value) - sub_known
                if bad:
                    raise SchemaViolation(f"unknown keys in [{key}]: {sorted(bad)}")
                kwargs[key] = sub(**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def load_config(path=None, overrides=None) -> PipelineConfig:
    """Read a TOML config; ``path=None`` falls back to ``$REMOVAL_SYNTH_CONFIG``.

    ``overrides`` is a flat mapping of top-level fields applied after the
    file, which is how CLI flags take precedence.
    """
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    data = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise UnreadableFile(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise SchemaViolation(f"config {path} is not valid TOML: {exc}") from exc
    cfg = PipelineConfig.from_dict(data)
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    return cfg.replace(**overrides) if overrides else cfg
