"""
Quality measures comparing a found quad with the ground-truth quad.

`q` is always the result and `m` the ground truth, both in image
coordinates; `t` is the template rectangle in document units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from shapely.geometry import Polygon

from app.internal.geometry import (
    FloatArray,
    GeometryError,
    Quad,
    homography_from_points,
)
from app.internal.pipeline import TemplateSpec


@dataclass(frozen=True)
class GroundTruth:
    m: Quad
    template: TemplateSpec
    image_size: tuple[int, int]
    """(width, height)."""


def template_rectangle(t: TemplateSpec) -> FloatArray:
    w, h = t.width, t.height
    return np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])


def discrepancy_D(q: Quad, m: Quad, t: TemplateSpec) -> float:
    """
    Largest distance between template corners and the ground-truth corners
    mapped through the homography that takes q onto the template, relative to
    the template perimeter. Vertex order matters.
    """
    rect = template_rectangle(t)
    try:
        h = homography_from_points(q.array(), rect)
    except GeometryError:
        return math.inf
    mapped = h.apply(m.array())
    if not np.all(np.isfinite(mapped)):
        return math.inf
    perimeter = 2.0 * (t.width + t.height)
    return float(np.max(np.linalg.norm(mapped - rect, axis=1)) / perimeter)


def min_d(q: Quad, m: Quad, t: TemplateSpec) -> float:
    """`discrepancy_D` minimised over the four cyclic renumberings of q."""
    return min(discrepancy_D(q.rolled(k), m, t) for k in range(4))


def _polygon(points: FloatArray) -> Polygon:
    poly = Polygon([(float(x), float(y)) for x, y in points])
    if not poly.is_valid:
        poly = poly.buffer(0)
    return poly


def _polygon_iou(a: Polygon, b: Polygon) -> float:
    union = a.union(b).area
    if union <= 0:
        return 0.0
    return float(a.intersection(b).area / union)


def iou(q: Quad, m: Quad) -> float:
    return _polygon_iou(_polygon(q.array()), _polygon(m.array()))


def iou_gt(q: Quad, m: Quad, t: TemplateSpec) -> float:
    """IoU measured in template coordinates after mapping q through the m-to-template homography."""
    rect = template_rectangle(t)
    h = homography_from_points(m.array(), rect)
    mapped = h.apply(q.array())
    if not np.all(np.isfinite(mapped)):
        return 0.0
    return _polygon_iou(_polygon(mapped), _polygon(rect))


def quad_mask(q: Optional[Quad], width: int, height: int) -> NDArray[np.bool_]:
    """Pixels whose integer centre lies inside the closed quad."""
    if q is None:
        return np.zeros((height, width), dtype=bool)
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    mask = np.ones((height, width), dtype=bool)
    for (ax, ay), (bx, by) in q.sides():
        mask &= (bx - ax) * (ys - ay) - (by - ay) * (xs - ax) >= 0
    return mask


def _mask_iou(a: NDArray[np.bool_], b: NDArray[np.bool_]) -> float:
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def mean_iou(q: Optional[Quad], m: Optional[Quad], image_size: tuple[int, int]) -> float:
    """Mean of the pixel IoU of the document region and of the background."""
    width, height = image_size
    mq = quad_mask(q, width, height)
    mm = quad_mask(m, width, height)
    return 0.5 * (_mask_iou(mq, mm) + _mask_iou(~mq, ~mm))
