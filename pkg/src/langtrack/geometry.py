"""Axis-aligned bounding boxes, coordinate conversions, and overlap computation.

Boxes are continuous (real-valued) with the origin at the image top-left and
y increasing downward, matching the MOT text-format convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BBox",
    "StateBox",
    "iou",
    "to_state",
    "from_state",
    "boxes_to_array",
    "iou_matrix",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: top-left corner (x, y), width w, height h, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"BBox field {name} must be finite, got {v!r}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"BBox must have non-negative size, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)


@dataclass(frozen=True)
class StateBox:
    """Box in filter coordinates: center (cx, cy), area s, aspect ratio r = w/h."""

    cx: float
    cy: float
    s: float
    r: float

    @property
    def is_degenerate(self) -> bool:
        return self.s <= 0 or self.r <= 0


def iou(a: BBox, b: BBox) -> float:
    """Intersection-over-union of two boxes; 0 when the union has zero area."""
    ix = min(a.right, b.right) - max(a.x, b.x)
    iy = min(a.bottom, b.bottom) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    # corner differences can outgrow the exact size at large coordinates
    return min(inter / union, 1.0)


def to_state(b: BBox) -> StateBox:
    """Convert a corner-format box into filter coordinates.

    Requires a non-degenerate box (w > 0 and h > 0): zero-size boxes are legal
    for overlap computation but cannot seed or update a motion filter.
    """
    if b.w <= 0 or b.h <= 0:
        raise ValueError(f"cannot convert degenerate box to state coordinates: w={b.w}, h={b.h}")
    return StateBox(b.x + b.w / 2.0, b.y + b.h / 2.0, b.w * b.h, b.w / b.h)


def from_state(sb: StateBox) -> BBox:
    """Invert :func:`to_state`. Errors on s < 0 or r <= 0."""
    if sb.s < 0 or sb.r <= 0:
        raise ValueError(f"degenerate state box: s={sb.s}, r={sb.r}")
    w = math.sqrt(sb.s * sb.r)
    h = math.sqrt(sb.s / sb.r)
    return BBox(sb.cx - w / 2.0, sb.cy - h / 2.0, w, h)


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    """Stack boxes into an (N, 4) float array of [x, y, w, h] rows."""
    return np.array([(b.x, b.y, b.w, b.h) for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_matrix(a: np.ndarray | Sequence[BBox], b: np.ndarray | Sequence[BBox]) -> np.ndarray:
    """Pairwise IoU between two box sets in [x, y, w, h] layout.

    Accepts (N, 4) arrays or BBox sequences; returns an (N, M) matrix.
    """
    if not isinstance(a, np.ndarray):
        a = boxes_to_array(a)
    if not isinstance(b, np.ndarray):
        b = boxes_to_array(b)
    if a.size == 0 or b.size == 0:
        return np.zeros((a.shape[0], b.shape[0]), dtype=np.float64)
    ax1, ay1 = a[:, 0, None], a[:, 1, None]
    ax2, ay2 = ax1 + a[:, 2, None], ay1 + a[:, 3, None]
    bx1, by1 = b[None, :, 0], b[None, :, 1]
    bx2, by2 = bx1 + b[None, :, 2], by1 + b[None, :, 3]
    iw = np.minimum(ax2, bx2) - np.maximum(ax1, bx1)
    ih = np.minimum(ay2, by2) - np.maximum(ay1, by1)
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = a[:, 2, None] * a[:, 3, None] + b[None, :, 2] * b[None, :, 3] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return np.clip(out, 0.0, 1.0)
