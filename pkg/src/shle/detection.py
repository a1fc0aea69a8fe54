"""Per-frame candidate box post-processing.

Detector output usually holds several candidates; height estimation needs
exactly one.  :func:`filter_candidates` keeps the right-hand half, then the
upper half, drops boxes touching the top border and returns the most
confident survivor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable

from .errors import ValidationError

if TYPE_CHECKING:
    from .config import PipelineConfig


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixels; ``y`` grows downward."""

    x_min: float
    y_min: float
    w: float
    h: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValidationError(f"box needs w > 0 and h > 0, got w={self.w}, h={self.h}")
        if not 0.0 <= self.score <= 1.0:
            raise ValidationError(f"box score must lie in [0, 1], got {self.score}")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.w / 2.0, self.y_min + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x_max(self) -> float:
        return self.x_min + self.w

    @property
    def y_max(self) -> float:
        return self.y_min + self.h

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.w, self.h)

    def pixel_ranges(self) -> tuple[range, range]:
        """Integer pixel centres c with ``x_min <= c < x_max`` (columns, then rows)."""
        u0, u1 = math.ceil(self.x_min), math.ceil(self.x_max)
        v0, v1 = math.ceil(self.y_min), math.ceil(self.y_max)
        return range(u0, max(u0, u1)), range(v0, max(v0, v1))


@dataclass
class DetectionSet:
    frame_index: int
    boxes: list[BBox] = field(default_factory=list)


def clamp_bbox(box: BBox, image_w: float, image_h: float) -> BBox | None:
    """Clip ``box`` to the image rectangle; ``None`` if nothing remains."""
    x0 = min(max(box.x_min, 0.0), image_w)
    y0 = min(max(box.y_min, 0.0), image_h)
    x1 = min(max(box.x_max, 0.0), image_w)
    y1 = min(max(box.y_max, 0.0), image_h)
    if x1 <= x0 or y1 <= y0:
        return None
    if (x0, y0, x1 - x0, y1 - y0) == box.as_tuple():
        return box
    return replace(box, x_min=x0, y_min=y0, w=x1 - x0, h=y1 - y0)


def _identity_key(box: BBox) -> tuple:
    # total order over every field so that equal-centre ties do not depend on input order
    return (box.x_min, box.y_min, box.w, box.h, box.score)


def _drop_half(boxes: list[BBox], key) -> list[BBox]:
    ordered = sorted(boxes, key=lambda b: (key(b), _identity_key(b)))
    return ordered[len(ordered) // 2:]


def filter_candidates(
    dets: DetectionSet | Iterable[BBox],
    image_w: float,
    image_h: float,
    cfg: PipelineConfig | None = None,
) -> BBox | None:
    """Select the single height-limit box of a frame, or ``None``.

    Steps, in order:

    1. drop the ``floor(n/2)`` boxes whose centres lie furthest toward the
       oncoming side (left for right-hand traffic);
    2. of the rest, drop the ``floor(n/2)`` lowest centres;
    3. drop boxes with ``y_min <= top_margin``;
    4. return the highest score; ties go to larger area, then smaller ``x_min``.
    """
    boxes = list(dets.boxes if isinstance(dets, DetectionSet) else dets)
    traffic_side = cfg.traffic_side if cfg is not None else "right"
    top_margin = cfg.top_margin if cfg is not None else 0.0
    if not boxes:
        return None

    if traffic_side == "right":
        boxes = _drop_half(boxes, lambda b: b.center[0])
    else:
        boxes = _drop_half(boxes, lambda b: -b.center[0])
    boxes = _drop_half(boxes, lambda b: -b.center[1])
    boxes = [b for b in boxes if b.y_min > top_margin]
    if not boxes:
        return None
    return min(boxes, key=lambda b: (-b.score, -b.area, b.x_min, _identity_key(b)))


def extend_bbox(box: BBox, M: float, image_h: float) -> BBox:
    """Push the lower edge down by ``M`` pixels without leaving the image."""
    if M < 0:
        raise ValidationError(f"pixel extension must be >= 0, got {M}")
    new_h = min(box.h + M, image_h - box.y_min)
    if new_h <= box.h:
        return box
    return replace(box, h=new_h)
