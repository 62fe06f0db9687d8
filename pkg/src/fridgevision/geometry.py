"""Axis-aligned box arithmetic: IoU, GIoU, clipping, per-category NMS.

Coordinates are continuous pixel values, origin top-left, x right, y down.
Area is (x2-x1)*(y2-y1); there is no inclusive +1 convention. All
operations are pure functions over immutable values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .errors import ValidationError


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle (x1, y1) top-left to (x2, y2) bottom-right."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValidationError(f"box coordinates must be finite, got {self}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(
                f"degenerate box: need x1 < x2 and y1 < y2, got "
                f"({self.x1}, {self.y1}, {self.x2}, {self.y2})"
            )

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def area(self) -> float:
        return self.width * self.height

    def translate(self, dx: float, dy: float) -> "Box":
        return Box(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Detection:
    """A localized, categorized detection with confidence and provenance."""

    box: Box
    category: str
    confidence: float
    camera_id: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValidationError(
                f"confidence must be in [0, 1], got {self.confidence}"
            )

    def with_box(self, box: Box) -> "Detection":
        return replace(self, box=box)


def intersection_area(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0 when disjoint, 1 iff the boxes coincide."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    union = a.area() + b.area() - inter
    return inter / union


def giou(a: Box, b: Box) -> float:
    """Generalized IoU: iou - (hull - union) / hull, in (-1, 1].

    The hull is the smallest axis-aligned box enclosing both inputs, so
    disjoint boxes score below zero in proportion to their separation.
    """
    inter = intersection_area(a, b)
    union = a.area() + b.area() - inter
    hull = (max(a.x2, b.x2) - min(a.x1, b.x1)) * (max(a.y2, b.y2) - min(a.y1, b.y1))
    base = inter / union if inter > 0.0 else 0.0
    return base - (hull - union) / hull


def clip_box(b: Box, width: float, height: float) -> Box | None:
    """Intersect a box with [0, width] x [0, height]; None if nothing remains."""
    if width <= 0 or height <= 0:
        raise ValidationError(f"clip bounds must be positive, got {width}x{height}")
    x1 = max(b.x1, 0.0)
    y1 = max(b.y1, 0.0)
    x2 = min(b.x2, float(width))
    y2 = min(b.y2, float(height))
    if x1 >= x2 or y1 >= y2:
        return None
    return Box(x1, y1, x2, y2)


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy per-category non-maximum suppression.

    Detections are visited by descending confidence (ties keep input
    order); one is suppressed when its IoU with an already-kept detection
    of the same category exceeds the threshold. Output is sorted by
    descending confidence.
    """
    if not (0.0 <= iou_threshold <= 1.0):
        raise ValidationError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    ordered = sorted(dets, key=lambda d: -d.confidence)
    kept: list[Detection] = []
    for det in ordered:
        suppressed = any(
            k.category == det.category and iou(k.box, det.box) > iou_threshold
            for k in kept
        )
        if not suppressed:
            kept.append(det)
    return kept
