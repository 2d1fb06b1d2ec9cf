from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.internal.edges import EdgeMap, EdgeMaps
from app.internal.geometry import FloatArray, HomoLine, Point2
from app.internal.hough import DetectedLine

IntArray = NDArray[np.int64]

# keeps huge intersection coordinates representable as int64 after rounding
_COORD_LIMIT = 1e7

# edge values at or below this count as empty for coverage
NONZERO_EPS = 1e-6


@dataclass(frozen=True)
class LineProfile:
    """
    One-pixel raster of a line across an edge map with prefix sums of the
    sampled values and of the non-zero indicator.

    The raster walks along the line's major axis (x for primarily horizontal
    lines, y otherwise), one sample per integer coordinate that stays inside
    the map. `start` is the major coordinate of the first sample.
    """

    line: HomoLine
    major_axis: Literal["x", "y"]
    start: int
    raster: IntArray
    prefix_values: FloatArray
    prefix_nonzero: IntArray

    def __len__(self) -> int:
        return len(self.raster)


@dataclass(frozen=True, slots=True)
class BorderStats:
    w: float
    """Sum of edge values along the segment."""
    w_prime: float
    """Sum of edge values along the two flanks beyond the segment ends."""
    c: float
    """Fraction of in-frame segment samples with a non-zero edge value."""


def build_profile(line: DetectedLine | HomoLine, edge_map: EdgeMap) -> LineProfile:
    homo = line.line if isinstance(line, DetectedLine) else line
    height, width = edge_map.values.shape
    if abs(homo.a) <= abs(homo.b):
        major: Literal["x", "y"] = "x"
        xs = np.arange(width, dtype=np.float64)
        ys = np.rint(-(homo.a * xs + homo.c) / homo.b)
        inside = (ys >= 0) & (ys < height)
        raster = np.stack([xs[inside], ys[inside]], axis=1).astype(np.int64)
        start = int(raster[0, 0]) if len(raster) else 0
    else:
        major = "y"
        ys = np.arange(height, dtype=np.float64)
        xs = np.rint(-(homo.b * ys + homo.c) / homo.a)
        inside = (xs >= 0) & (xs < width)
        raster = np.stack([xs[inside], ys[inside]], axis=1).astype(np.int64)
        start = int(raster[0, 1]) if len(raster) else 0

    samples = edge_map.values[raster[:, 1], raster[:, 0]] if len(raster) else np.empty(0)
    prefix_values = np.concatenate([[0.0], np.cumsum(samples)])
    prefix_nonzero = np.concatenate([[0], np.cumsum(samples > NONZERO_EPS)]).astype(np.int64)
    return LineProfile(
        line=homo,
        major_axis=major,
        start=start,
        raster=raster,
        prefix_values=prefix_values,
        prefix_nonzero=prefix_nonzero,
    )


def _segment_stats(
    prefix_values: FloatArray,
    prefix_nonzero: IntArray,
    offset: IntArray,
    length: IntArray,
    lo: IntArray,
    hi: IntArray,
    flank: int,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    Vectorised stats over raster index ranges [lo, hi] of profiles stored
    back to back. Each profile of `length` samples owns `length + 1` prefix
    entries starting at `offset`.
    """

    def span(a: IntArray, b: IntArray, prefix: np.ndarray) -> np.ndarray:
        a = np.clip(a, 0, length)
        b = np.clip(b, 0, length)
        b = np.maximum(a, b)
        return prefix[offset + b] - prefix[offset + a]

    w = span(lo, hi + 1, prefix_values)
    wp = span(lo - flank, lo, prefix_values) + span(hi + 1, hi + 1 + flank, prefix_values)
    nonzero = span(lo, hi + 1, prefix_nonzero)
    inside = np.maximum(np.clip(hi + 1, 0, length) - np.clip(lo, 0, length), 0)
    c = np.where(inside > 0, nonzero / np.maximum(inside, 1), 0.0)
    return w, wp, c


def _major_range(
    is_x: np.ndarray, start: IntArray, p0: FloatArray, p1: FloatArray
) -> tuple[IntArray, IntArray]:
    m0 = np.where(is_x, p0[..., 0], p0[..., 1])
    m1 = np.where(is_x, p1[..., 0], p1[..., 1])
    m0 = np.clip(np.nan_to_num(m0, nan=0.0), -_COORD_LIMIT, _COORD_LIMIT)
    m1 = np.clip(np.nan_to_num(m1, nan=0.0), -_COORD_LIMIT, _COORD_LIMIT)
    lo = np.rint(np.minimum(m0, m1)).astype(np.int64) - start
    hi = np.rint(np.maximum(m0, m1)).astype(np.int64) - start
    return lo, hi


def border_stats(
    profile: LineProfile, segment: tuple[Point2, Point2], flank: int = 10
) -> BorderStats:
    """
    Stats of the part of `profile` between the segment endpoints. Endpoints
    are located by their major coordinate; anything outside the map is
    treated as empty.
    """
    if len(profile) == 0:
        return BorderStats(0.0, 0.0, 0.0)
    is_x = np.array([profile.major_axis == "x"])
    start = np.array([profile.start], dtype=np.int64)
    lo, hi = _major_range(
        is_x,
        start,
        np.asarray([segment[0]], dtype=np.float64),
        np.asarray([segment[1]], dtype=np.float64),
    )
    zero = np.zeros(1, dtype=np.int64)
    w, wp, c = _segment_stats(
        profile.prefix_values,
        profile.prefix_nonzero,
        zero,
        np.array([len(profile)], dtype=np.int64),
        lo,
        hi,
        flank,
    )
    return BorderStats(w=float(w[0]), w_prime=float(wp[0]), c=float(c[0]))


def segment_stats(
    p0: ArrayLike, p1: ArrayLike, maps: EdgeMaps, flank: int = 10
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """
    (w, w', c) of arbitrary segments p0-p1, each measured on the raster of
    its own line in the edge map of its orientation. Gives the same numbers
    as `border_stats` on a freshly built profile without building one.
    """
    a = np.asarray(p0, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(p1, dtype=np.float64).reshape(-1, 2)
    n = len(a)
    w = np.zeros(n)
    wp = np.zeros(n)
    c = np.zeros(n)
    if n == 0:
        return w, wp, c

    dx, dy = b[:, 0] - a[:, 0], b[:, 1] - a[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = dy / dx
    use_horizontal = (dx != 0) & (slope > -1.0) & (slope <= 1.0)
    # line coefficients as in HomoLine.through
    la = a[:, 1] - b[:, 1]
    lb = b[:, 0] - a[:, 0]
    lc = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
    x_major = np.abs(la) <= np.abs(lb)

    for horizontal in (True, False):
        values = maps.horizontal.values if horizontal else maps.vertical.values
        height, width = values.shape
        for major_x in (True, False):
            idx = np.nonzero((use_horizontal == horizontal) & (x_major == major_x))[0]
            if not len(idx):
                continue
            extent, cross = (width, height) if major_x else (height, width)
            axis = 0 if major_x else 1
            m0 = np.clip(np.nan_to_num(a[idx, axis], nan=0.0), -_COORD_LIMIT, _COORD_LIMIT)
            m1 = np.clip(np.nan_to_num(b[idx, axis], nan=0.0), -_COORD_LIMIT, _COORD_LIMIT)
            lo = np.rint(np.minimum(m0, m1)).astype(np.int64)
            hi = np.rint(np.maximum(m0, m1)).astype(np.int64)
            first = np.maximum(lo - flank, 0)
            last = np.minimum(hi + flank, extent - 1)
            span = int(max((last - first).max() + 1, 0))
            if span == 0:
                continue
            m = first[:, None] + np.arange(span)[None, :]
            num, den = (la[idx], lb[idx]) if major_x else (lb[idx], la[idx])
            with np.errstate(divide="ignore", invalid="ignore"):
                minor = np.rint(-(num[:, None] * m + lc[idx, None]) / den[:, None])
            inside = (m <= last[:, None]) & (minor >= 0) & (minor < cross)
            mi = np.where(inside, minor, 0).astype(np.int64)
            mm = np.where(inside, m, 0)
            samples = np.where(inside, values[mi, mm] if major_x else values[mm, mi], 0.0)
            on_segment = inside & (m >= lo[:, None]) & (m <= hi[:, None])
            w[idx] = np.where(on_segment, samples, 0.0).sum(axis=1)
            wp[idx] = np.where(inside & ~on_segment, samples, 0.0).sum(axis=1)
            count = on_segment.sum(axis=1)
            nonzero = (on_segment & (samples > NONZERO_EPS)).sum(axis=1)
            c[idx] = np.where(count > 0, nonzero / np.maximum(count, 1), 0.0)
    return w, wp, c


def contour_score(sides: Sequence[BorderStats]) -> float:
    """Sum of w penalised by the missing fraction of the border, minus the flank sums."""
    if not sides:
        raise ValueError("A contour needs at least one side")
    w = sum(s.w for s in sides)
    misses = sum(1.0 - s.c for s in sides)
    w_prime = sum(s.w_prime for s in sides)
    return w / (1.0 + misses) - w_prime


def contour_scores(
    w: ArrayLike, c: ArrayLike, w_prime: ArrayLike, counted: ArrayLike | None = None
) -> FloatArray:
    """
    Batch form of `contour_score` over arrays of shape (..., sides). When
    `counted` is given, only the flagged sides add their missing fraction to
    the penalty.
    """
    w_ = np.asarray(w, dtype=np.float64)
    c_ = np.asarray(c, dtype=np.float64)
    wp_ = np.asarray(w_prime, dtype=np.float64)
    misses = 1.0 - c_
    if counted is not None:
        misses = np.where(np.asarray(counted, dtype=bool), misses, 0.0)
    return w_.sum(axis=-1) / (1.0 + misses.sum(axis=-1)) - wp_.sum(axis=-1)


@dataclass(frozen=True)
class ProfileBank:
    """Profiles of many lines stored back to back for batch statistics."""

    profiles: tuple[LineProfile, ...]
    offsets: IntArray
    lengths: IntArray
    starts: IntArray
    major_is_x: NDArray[np.bool_]
    prefix_values: FloatArray
    prefix_nonzero: IntArray

    @classmethod
    def build(cls, lines: Sequence[DetectedLine], maps: EdgeMaps) -> ProfileBank:
        profiles = tuple(build_profile(line, maps.for_orientation(line.orientation)) for line in lines)
        lengths = np.array([len(p) for p in profiles], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(lengths + 1)[:-1]]).astype(np.int64)
        return cls(
            profiles=profiles,
            offsets=offsets,
            lengths=lengths,
            starts=np.array([p.start for p in profiles], dtype=np.int64),
            major_is_x=np.array([p.major_axis == "x" for p in profiles], dtype=bool),
            prefix_values=np.concatenate([p.prefix_values for p in profiles])
            if profiles
            else np.zeros(0),
            prefix_nonzero=np.concatenate([p.prefix_nonzero for p in profiles])
            if profiles
            else np.zeros(0, dtype=np.int64),
        )

    def stats(
        self, line_index: ArrayLike, p0: ArrayLike, p1: ArrayLike, flank: int = 10
    ) -> tuple[FloatArray, FloatArray, FloatArray]:
        """(w, w', c) for segments p0-p1 lying on the lines `line_index`."""
        idx = np.asarray(line_index, dtype=np.int64)
        a = np.asarray(p0, dtype=np.float64)
        b = np.asarray(p1, dtype=np.float64)
        lo, hi = _major_range(self.major_is_x[idx], self.starts[idx], a, b)
        return _segment_stats(
            self.prefix_values,
            self.prefix_nonzero,
            self.offsets[idx],
            self.lengths[idx],
            lo,
            hi,
            flank,
        )
