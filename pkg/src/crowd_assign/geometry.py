"""Axis-aligned box arithmetic.

Boxes use the corner convention ``(x1, y1, x2, y2)`` in continuous pixel
coordinates: area is ``(x2 - x1) * (y2 - y1)`` with no +1 correction and
containment tests are closed on every edge. Batched functions take ``(N, 4)``
float arrays; scalar helpers accept any 4-sequence.
"""
from typing import NamedTuple

import numpy as np

from . import _kernels


class Box(NamedTuple):
    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def area(self):
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    @property
    def center(self):
        return Point(0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    def is_valid(self):
        return bool(np.all(np.isfinite(self))) and self.x1 <= self.x2 and self.y1 <= self.y2


class Point(NamedTuple):
    x: float
    y: float


def as_boxes(boxes):
    """Coerce to a contiguous ``(N, 4)`` float64 array."""
    arr = np.ascontiguousarray(boxes, dtype=np.float64)
    if arr.size == 0:
        return arr.reshape(0, 4)
    return arr.reshape(-1, 4)


def validate_boxes(boxes, name="boxes"):
    arr = as_boxes(boxes)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contain non-finite coordinates")
    if np.any(arr[:, 2] < arr[:, 0]) or np.any(arr[:, 3] < arr[:, 1]):
        raise ValueError(f"{name} violate x1 <= x2 and y1 <= y2")
    return arr


def box_area(boxes):
    b = as_boxes(boxes)
    return (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])


def box_centers(boxes):
    b = as_boxes(boxes)
    return np.stack([0.5 * (b[:, 0] + b[:, 2]), 0.5 * (b[:, 1] + b[:, 3])], axis=1)


def intersection_area(a, b):
    """Element-wise intersection area of two equally sized box arrays."""
    a, b = as_boxes(a), as_boxes(b)
    iw = np.maximum(np.minimum(a[:, 2], b[:, 2]) - np.maximum(a[:, 0], b[:, 0]), 0.0)
    ih = np.maximum(np.minimum(a[:, 3], b[:, 3]) - np.maximum(a[:, 1], b[:, 1]), 0.0)
    return iw * ih


def intersect(a, b):
    """Element-wise intersection boxes; empty overlaps collapse to zero area."""
    a, b = as_boxes(a), as_boxes(b)
    x1 = np.maximum(a[:, 0], b[:, 0])
    y1 = np.maximum(a[:, 1], b[:, 1])
    x2 = np.maximum(np.minimum(a[:, 2], b[:, 2]), x1)
    y2 = np.maximum(np.minimum(a[:, 3], b[:, 3]), y1)
    return np.stack([x1, y1, x2, y2], axis=1)


def pairwise_iou(a, b):
    """IoU between every box in ``a`` (N) and every box in ``b`` (M) -> (N, M)."""
    return _kernels.pairwise_overlap(a, b, generalized=False)


def pairwise_giou(a, b):
    return _kernels.pairwise_overlap(a, b, generalized=True)


def points_in_boxes(points, boxes):
    """(I, J) mask: point j lies in box i, boundaries included."""
    return _kernels.points_in_boxes(points, boxes)


def iou(a, b):
    """Intersection over union of two boxes. Zero when the union is empty."""
    return float(pairwise_iou(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))[0, 0])


def giou(a, b):
    """Generalized IoU: IoU minus the fraction of the enclosing hull not covered by the union.

    Lies in (-1, 1]. Degenerate boxes count as zero area; if the hull itself
    has zero area the hull term is dropped.
    """
    return float(pairwise_giou(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))[0, 0])


def contains(box, point):
    x1, y1, x2, y2 = box
    px, py = point
    return bool(x1 <= px <= x2 and y1 <= py <= y2)
