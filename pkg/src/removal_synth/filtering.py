"""Instance and background quality filters, per-class statistics."""
from __future__ import annotations

import hashlib
import math
from collections import Counter, defaultdict

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import AreaWindow, PipelineConfig, ScoreParams
from .core import ClassStats
from .exceptions import EmptyClass

AREA_TOO_LARGE = "AreaTooLarge"
AREA_TOO_SMALL = "AreaTooSmall"
LOW_SCORE = "LowScore"
UNSCORED = "Unscored"
LOW_RESOLUTION = "LowResolution"
EXTREME_ASPECT = "ExtremeAspect"
OVER_COVERED = "OverCovered"


def class_threshold(scores, b=0.2, d=0.02) -> float:
    """Per-class score cut: ``min(b, max(scores) - d)``."""
    scores = list(scores)
    if not scores:
        raise EmptyClass("cannot threshold a class without scores")
    return min(b, max(scores) - d)


def stub_score(instance_id: str) -> float:
    """Deterministic pseudo-score in [0.15, 0.35) derived from the id hash.

    Stands in for an external semantic-relevance model in tests and demos.
    """
    digest = hashlib.sha256(str(instance_id).encode()).digest()
    return 0.15 + 0.2 * int.from_bytes(digest[:8], "big") / 2**64


def instance_score(inst, provider="annotation") -> float:
    if provider == "stub":
        return inst.score if inst.scored else stub_score(inst.id)
    return inst.score


def class_thresholds(instances, b=0.2, d=0.02, provider="annotation") -> dict:
    """Thresholds for every class that has at least one usable score."""
    by_class = defaultdict(list)
    for inst in instances:
        s = instance_score(inst, provider)
        if not math.isnan(s):
            by_class[inst.class_label].append(s)
    return {c: class_threshold(s, b, d) for c, s in sorted(by_class.items())}


def filter_instances(instances, cfg: PipelineConfig = None, thresholds=None):
    """Split instances into ``(kept, rejected)``.

    ``rejected`` holds ``(instance, reason)`` pairs. Area bounds and the
    score threshold are both inclusive. When ``thresholds`` is None they are
    computed from the score sets of ``instances`` themselves.
    """
    cfg = cfg or PipelineConfig()
    provider = cfg.score_provider
    if thresholds is None:
        thresholds = class_thresholds(instances, cfg.score_params.b, cfg.score_params.d, provider)
    lo, hi = cfg.area_window.min_ratio, cfg.area_window.max_ratio
    kept, rejected = [], []
    for inst in instances:
        if inst.area_ratio > hi:
            rejected.append((inst, AREA_TOO_LARGE))
            continue
        if inst.area_ratio < lo:
            rejected.append((inst, AREA_TOO_SMALL))
            continue
        score = instance_score(inst, provider)
        if math.isnan(score) or inst.class_label not in thresholds:
            rejected.append((inst, UNSCORED))
        elif score >= thresholds[inst.class_label]:
            kept.append(inst)
        else:
            rejected.append((inst, LOW_SCORE))
    return kept, rejected


def background_reason(width, height, coverage, rules):
    # aspect first: a 1200x500 frame reports ExtremeAspect, not LowResolution
    if max(width, height) / min(width, height) > rules.max_aspect:
        return EXTREME_ASPECT
    if min(width, height) < rules.min_side:
        return LOW_RESOLUTION
    if coverage > rules.max_coverage:
        return OVER_COVERED
    return None


def filter_backgrounds(backgrounds, cfg: PipelineConfig = None):
    cfg = cfg or PipelineConfig()
    kept, rejected = [], []
    for bg in backgrounds:
        reason = background_reason(bg.width, bg.height, bg.coverage_ratio, cfg.background_rules)
        if reason is None:
            kept.append(bg)
        else:
            rejected.append((bg, reason))
    return kept, rejected


def compute_class_stats(instances, thresholds=None) -> list:
    """Mean and population variance of the area ratio, per class.

    Sums are exactly rounded (``math.fsum``) so the result does not depend
    on the order of ``instances``.
    """
    thresholds = thresholds or {}
    by_class = defaultdict(list)
    for inst in instances:
        by_class[inst.class_label].append(inst.area_ratio)
    stats = []
    for label in sorted(by_class):
        ratios = by_class[label]
        n = len(ratios)
        mu = math.fsum(ratios) / n
        sigma2 = math.fsum((r - mu) ** 2 for r in ratios) / n
        stats.append(ClassStats(label, mu, sigma2, thresholds.get(label, math.nan), n))
    return stats


def filter_report(inst_rejected, bg_rejected, thresholds, stats) -> dict:
    return {
        "instances_rejected": dict(sorted(Counter(r for _, r in inst_rejected).items())),
        "backgrounds_rejected": dict(sorted(Counter(r for _, r in bg_rejected).items())),
        "classes": {
            s.class_label: {
                "mu": s.mu,
                "sigma2": s.sigma2,
                "threshold": thresholds.get(s.class_label),
                "count": s.count,
            }
            for s in stats
        },
        "thresholds": dict(thresholds),
    }


class InstanceFilter(BaseEstimator):
    """Learns per-class score thresholds and size statistics from a pool.

    ``fit`` computes ``thresholds_`` over all scored instances of each class,
    applies the area and score rules, and keeps the survivors' size
    statistics in ``class_stats_``. ``transform`` filters new instances with
    the learned thresholds.
    """

    def __init__(self, b=0.2, d=0.02, min_ratio=0.05, max_ratio=0.95, score_provider="annotation"):
        self.b = b
        self.d = d
        self.min_ratio = min_ratio
        self.max_ratio = max_ratio
        self.score_provider = score_provider

    @classmethod
    def from_config(cls, cfg: PipelineConfig):
        return cls(
            b=cfg.score_params.b,
            d=cfg.score_params.d,
            min_ratio=cfg.area_window.min_ratio,
            max_ratio=cfg.area_window.max_ratio,
            score_provider=cfg.score_provider,
        )

    def _config(self):
        return PipelineConfig(
            score_params=ScoreParams(self.b, self.d),
            area_window=AreaWindow(self.min_ratio, self.max_ratio),
            score_provider=self.score_provider,
        )

    def fit(self, instances, y=None):
        instances = list(instances)
        self.thresholds_ = class_thresholds(instances, self.b, self.d, self.score_provider)
        kept, rejected = filter_instances(instances, self._config(), self.thresholds_)
        self.rejected_ = rejected
        self.class_stats_ = {s.class_label: s for s in compute_class_stats(kept, self.thresholds_)}
        self.n_kept_ = len(kept)
        return self

    def transform(self, instances):
        check_is_fitted(self, "thresholds_")
        kept, _ = filter_instances(list(instances), self._config(), self.thresholds_)
        return kept

    def fit_transform(self, instances, y=None):
        return self.fit(instances).transform(instances)
