"""
Fast Hough transform over dyadic line patterns.

Each of the four slope families is reduced to the base case, lines that
advance by at most one column per row from left to right, by flipping and
transposing the band. A line in the base case is identified by the column
it starts at on the first row (the intercept) and the total number of
columns it advances over the padded height (the shift).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cache
from typing import Literal, Sequence

import numpy as np

from app.internal.edges import EdgeMap
from app.internal.env_settings import HoughSettings
from app.internal.geometry import FloatArray, HomoLine, Orientation, Point2
from app.util.log import logger

SlopeFamily = Literal["vert+", "vert-", "horz+", "horz-"]

FAMILY_ORDER: tuple[SlopeFamily, ...] = ("vert+", "vert-", "horz+", "horz-")
FAMILIES: dict[Orientation, tuple[SlopeFamily, SlopeFamily]] = {
    "vertical": ("vert+", "vert-"),
    "horizontal": ("horz+", "horz-"),
}


def family_orientation(family: SlopeFamily) -> Orientation:
    return "vertical" if family.startswith("vert") else "horizontal"


def next_power_of_two(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


@cache
def _pattern(length: int, shift: int) -> tuple[int, ...]:
    if length == 1:
        return (0,)
    half = _pattern(length // 2, shift // 2)
    step = shift - shift // 2
    return half + tuple(step + o for o in half)


def dyadic_pattern(length: int, shift: int) -> list[int]:
    """
    Column offsets, one per row, of the dyadic line with the given shift over
    `length` rows (a power of two). Offsets start at 0 and end at `shift`.
    """
    if length <= 0 or length & (length - 1):
        raise ValueError(f"Pattern length must be a power of two, got {length}")
    if not 0 <= shift < length:
        raise ValueError(f"Shift must be in [0, {length}), got {shift}")
    return list(_pattern(length, shift))


def _dyadic_sums(a: FloatArray, max_shift: int) -> FloatArray:
    """
    Sums of `a` (padded height, width) along every dyadic pattern with shift
    in [0, max_shift], indexed [shift, start column]. Patterns leaving the
    right border see zeros.
    """
    width = a.shape[1]
    h = a[:, None, :]
    while h.shape[0] > 1:
        top, bottom = h[0::2], h[1::2]
        count = min(2 * top.shape[1], max_shift + 1)
        out = np.empty((top.shape[0], count, width), dtype=np.float64)
        for s in range(count):
            half = s // 2
            step = s - half
            out[:, s, :] = top[:, half, :]
            if step < width:
                out[:, s, : width - step] += bottom[:, half, step:]
        h = out
    return h[0]


@dataclass(frozen=True, slots=True)
class BandGeometry:
    x0: int
    y0: int
    width: int
    height: int
    index: int = 0


@dataclass(frozen=True)
class HoughImage:
    """
    Accumulator of one slope family over one band, indexed [shift, column].

    Column j corresponds to the base-case intercept j - `pad`; mirrored
    families flip the intercept back into band coordinates.
    """

    accumulator: FloatArray
    family: SlopeFamily
    band: BandGeometry
    pattern_length: int
    pad: int

    @property
    def orientation(self) -> Orientation:
        return family_orientation(self.family)

    @property
    def cross_extent(self) -> int:
        return self.band.width if self.orientation == "vertical" else self.band.height

    @property
    def max_shift(self) -> int:
        return self.accumulator.shape[0] - 1

    def line_params(self, shift_index: int, column: int) -> tuple[int, int]:
        """(intercept, signed shift) in band coordinates of an accumulator cell."""
        base = column - self.pad
        if self.family.endswith("-"):
            return self.cross_extent - 1 - base, -shift_index
        return base, shift_index

    def cell(self, intercept: int, shift: int) -> tuple[int, int]:
        if self.family.endswith("-"):
            return -shift, self.cross_extent - 1 - intercept + self.pad
        return shift, intercept + self.pad

    def value(self, intercept: int, shift: int) -> float:
        row, column = self.cell(intercept, shift)
        if not (0 <= row < self.accumulator.shape[0] and 0 <= column < self.accumulator.shape[1]):
            return 0.0
        return float(self.accumulator[row, column])

    def selectable(self) -> np.ndarray:
        """
        Mask of cells that may hold a peak. A full shift of the pattern length
        minus one is a 45 degree line; it belongs to the other orientation for
        vert+ and horz-, which keeps every slope in exactly one family.
        """
        mask = np.ones(self.accumulator.shape, dtype=bool)
        if self.family in ("vert+", "horz-") and self.max_shift == self.pattern_length - 1:
            mask[-1] = False
        return mask

    def selectable_max(self) -> float:
        values = self.accumulator[self.selectable()]
        return float(values.max()) if values.size else 0.0


def fht(
    values: FloatArray,
    family: SlopeFamily,
    band: BandGeometry | None = None,
    max_shift: int | None = None,
) -> HoughImage:
    """
    Fast Hough transform of a band (rows y, columns x) for one slope family.
    `max_shift` limits the transform to the shallower lines of the family.
    """
    b = np.asarray(values, dtype=np.float64)
    if b.ndim != 2 or b.size == 0:
        raise ValueError("Hough transform needs a non-empty 2-D band")
    if band is None:
        band = BandGeometry(0, 0, b.shape[1], b.shape[0])
    a = b if family.startswith("vert") else b.T
    if family.endswith("-"):
        a = a[:, ::-1]
    rows, cols = a.shape
    n_pad = next_power_of_two(rows)
    limit = n_pad - 1 if max_shift is None else max(0, min(max_shift, n_pad - 1))
    pad = min(n_pad - 1, limit)

    padded = np.zeros((n_pad, pad + cols), dtype=np.float64)
    padded[:rows, pad:] = a
    acc = _dyadic_sums(padded, limit)
    return HoughImage(accumulator=acc, family=family, band=band, pattern_length=n_pad, pad=pad)


@dataclass(frozen=True, slots=True)
class HoughPeak:
    intercept: int
    shift: int
    value: float
    family: SlopeFamily
    row: int
    column: int


@dataclass(frozen=True, slots=True)
class DetectedLine:
    line: HomoLine
    orientation: Orientation
    band_index: int
    peak_value: float
    endpoints: tuple[Point2, Point2]


def inverse_peak(peak: HoughPeak, hough: HoughImage) -> DetectedLine:
    """Image line through the first and last pixel of the peak's dyadic pattern."""
    band = hough.band
    last = hough.pattern_length - 1
    i, s = peak.intercept, peak.shift
    if hough.orientation == "vertical":
        p, q = (i, 0), (i + s, last)
    else:
        p, q = (0, i), (last, i + s)
    p0 = Point2(float(p[0] + band.x0), float(p[1] + band.y0))
    p1 = Point2(float(q[0] + band.x0), float(q[1] + band.y0))
    return DetectedLine(
        line=HomoLine.through(p0, p1),
        orientation=hough.orientation,
        band_index=band.index,
        peak_value=peak.value,
        endpoints=(p0, p1),
    )


def _local_maxima(acc: FloatArray, selectable: np.ndarray) -> np.ndarray:
    """
    Strictly greater than the neighbours above and to the left, at least as
    large as the other six. Ties on a plateau resolve to its top-left cell.
    """
    a = np.where(selectable, acc, -np.inf)
    p = np.pad(a, 1, constant_values=-np.inf)
    centre = p[1:-1, 1:-1]
    ok = selectable.copy()
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            other = p[1 + dr : p.shape[0] - 1 + dr, 1 + dc : p.shape[1] - 1 + dc]
            if (dr, dc) in ((-1, 0), (0, -1)):
                ok &= centre > other
            else:
                ok &= centre >= other
    return ok


def select_peaks(
    houghs: Sequence[HoughImage],
    count: int,
    rel_threshold: float,
    min_sep: float,
    global_max: float,
) -> list[HoughPeak]:
    """
    Greedy selection of up to `count` local maxima across the given
    accumulators, strongest first. A peak is skipped when it lies within or at
    `min_sep` (in intercept/shift index units) of an already selected one.
    Ordering ties are broken by family, then shift, then column.
    """
    if count <= 0 or global_max <= 0:
        return []
    threshold = rel_threshold * global_max
    found: list[tuple[float, int, int, int, HoughImage]] = []
    for hough in houghs:
        acc = hough.accumulator
        mask = _local_maxima(acc, hough.selectable()) & (acc >= threshold) & (acc > 0)
        rows, cols = np.nonzero(mask)
        family_rank = FAMILY_ORDER.index(hough.family)
        for r, c in zip(rows.tolist(), cols.tolist()):
            found.append((float(acc[r, c]), family_rank, r, c, hough))
    found.sort(key=lambda f: (-f[0], f[1], f[2], f[3]))

    selected: list[HoughPeak] = []
    for value, _, r, c, hough in found:
        intercept, shift = hough.line_params(r, c)
        if any(math.hypot(intercept - p.intercept, shift - p.shift) <= min_sep for p in selected):
            continue
        selected.append(HoughPeak(intercept, shift, value, hough.family, r, c))
        if len(selected) == count:
            break
    return selected


def split_bands(width: int, height: int, bands: int, axis: Literal["x", "y"]) -> list[BandGeometry]:
    """Equal bands along one axis, the remainder goes to the last band."""
    extent = width if axis == "x" else height
    bands = max(1, min(bands, extent))
    size = extent // bands
    out: list[BandGeometry] = []
    for i in range(bands):
        start = i * size
        stop = extent if i == bands - 1 else start + size
        if axis == "x":
            out.append(BandGeometry(start, 0, stop - start, height, i))
        else:
            out.append(BandGeometry(0, start, width, stop - start, i))
    return out


def transform_map(edge_map: EdgeMap, bands: Sequence[BandGeometry]) -> list[list[HoughImage]]:
    """Hough images of both slope families of the map's orientation, per band."""
    out: list[list[HoughImage]] = []
    for band in bands:
        values = edge_map.values[band.y0 : band.y0 + band.height, band.x0 : band.x0 + band.width]
        out.append([fht(values, family, band) for family in FAMILIES[edge_map.orientation]])
    return out


def detection_parts(
    h_map: EdgeMap, v_map: EdgeMap, settings: HoughSettings
) -> dict[Orientation, list[list[HoughImage]]]:
    """
    The map whose lines run along the longer image dimension is split into
    bands across that dimension; the other map is transformed whole.
    """
    width, height = h_map.width, h_map.height
    whole = [BandGeometry(0, 0, width, height, 0)]
    if height >= width:
        return {
            "vertical": transform_map(v_map, split_bands(width, height, settings.bands, "y")),
            "horizontal": transform_map(h_map, whole),
        }
    return {
        "horizontal": transform_map(h_map, split_bands(width, height, settings.bands, "x")),
        "vertical": transform_map(v_map, whole),
    }


def detect_lines(
    h_map: EdgeMap, v_map: EdgeMap, settings: HoughSettings = HoughSettings()
) -> tuple[list[DetectedLine], list[DetectedLine]]:
    """Up to `peaks_per_part` lines per band and family pair, horizontal lines first."""
    if h_map.values.shape != v_map.values.shape:
        raise ValueError("Edge maps must have the same shape")
    parts = detection_parts(h_map, v_map, settings)
    found: dict[Orientation, list[DetectedLine]] = {"horizontal": [], "vertical": []}
    for orientation, bands in parts.items():
        # the relative threshold uses the maximum over all bands of the map
        global_max = max(h.selectable_max() for band in bands for h in band)
        for houghs in bands:
            peaks = select_peaks(
                houghs,
                settings.peaks_per_part,
                settings.rel_threshold,
                settings.min_separation,
                global_max,
            )
            by_family = {h.family: h for h in houghs}
            found[orientation].extend(inverse_peak(p, by_family[p.family]) for p in peaks)
    logger.debug(
        "Detected lines",
        horizontal=len(found["horizontal"]),
        vertical=len(found["vertical"]),
    )
    return found["horizontal"], found["vertical"]
