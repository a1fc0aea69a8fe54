"""Stage-1 box metrics and stage-2 height metrics, plus corpus averaging."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

from .detection import BBox
from .errors import DomainError


@dataclass(frozen=True)
class BoxMetrics:
    cpd: float
    rcpda: float
    rcpdh: float


@dataclass(frozen=True)
class HeightMetrics:
    he: float
    her: float


@dataclass(frozen=True)
class CorpusSummary:
    n_height: int = 0
    n_box: int = 0
    mean_abs_he: float | None = None
    mean_her: float | None = None
    mean_cpd: float | None = None
    mean_rcpda: float | None = None
    mean_rcpdh: float | None = None


def box_metrics(pred: BBox, gt: BBox) -> BoxMetrics:
    """Centre point distance and its normalisations by the ground-truth box.

    RCPDA divides by the ground-truth area (units px^-1); RCPDH by its diagonal.
    """
    if not (gt.w > 0 and gt.h > 0):
        raise DomainError("ground-truth box must have positive width and height")
    (xp, yp), (xg, yg) = pred.center, gt.center
    cpd = math.hypot(xp - xg, yp - yg)
    return BoxMetrics(cpd, cpd / (gt.w * gt.h), cpd / math.hypot(gt.w, gt.h))


def height_metrics(ph: float, gt: float) -> HeightMetrics:
    """Signed height error (m) and absolute error rate (percent)."""
    if not gt > 0:
        raise DomainError(f"ground-truth height must be > 0, got {gt}")
    he = ph - gt
    return HeightMetrics(he, abs(he) / gt * 100.0)


def _mean(values: list[float]) -> float:
    return math.fsum(values) / len(values)


def aggregate(per_scene: Iterable[HeightMetrics | BoxMetrics]) -> CorpusSummary:
    """Average per-scene metrics; |HE| is averaged by magnitude."""
    items = list(per_scene)
    if not items:
        raise DomainError("cannot aggregate an empty metrics list")
    heights = [m for m in items if isinstance(m, HeightMetrics)]
    boxes = [m for m in items if isinstance(m, BoxMetrics)]
    if len(heights) + len(boxes) != len(items):
        raise DomainError("aggregate accepts only HeightMetrics and BoxMetrics")
    summary = {"n_height": len(heights), "n_box": len(boxes)}
    if heights:
        summary["mean_abs_he"] = _mean([abs(m.he) for m in heights])
        summary["mean_her"] = _mean([m.her for m in heights])
    if boxes:
        summary["mean_cpd"] = _mean([m.cpd for m in boxes])
        summary["mean_rcpda"] = _mean([m.rcpda for m in boxes])
        summary["mean_rcpdh"] = _mean([m.rcpdh for m in boxes])
    return CorpusSummary(**summary)
