from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from app.internal.env_settings import EdgeParams
from app.internal.geometry import FloatArray, Orientation
from app.internal.imaging import RgbImage


@dataclass(frozen=True)
class EdgeMap:
    values: FloatArray
    orientation: Orientation
    fill_value: float = 1.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("Edge map values must be a finite non-negative 2-D array")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    def scaled(self, factor: float) -> EdgeMap:
        return EdgeMap(self.values * factor, self.orientation, self.fill_value * factor)


@dataclass(frozen=True)
class EdgeMaps:
    horizontal: EdgeMap
    vertical: EdgeMap

    def for_orientation(self, orientation: Orientation) -> EdgeMap:
        return self.horizontal if orientation == "horizontal" else self.vertical


def compute_edge_map(
    img: RgbImage, orientation: Orientation, params: EdgeParams = EdgeParams()
) -> EdgeMap:
    """
    Directional edge map. Horizontal edges are searched column by column;
    vertical edges are the same pipeline run on the transposed image.
    """
    pixels = np.asarray(img.pixels, dtype=np.float64)
    if orientation == "vertical":
        values = _column_edges(pixels.transpose(1, 0, 2), params).T
    else:
        values = _column_edges(pixels, params)
    return EdgeMap(values, orientation, params.fill_value)


def compute_edge_maps(img: RgbImage, params: EdgeParams = EdgeParams()) -> EdgeMaps:
    return EdgeMaps(
        horizontal=compute_edge_map(img, "horizontal", params),
        vertical=compute_edge_map(img, "vertical", params),
    )


def _column_edges(pixels: FloatArray, params: EdgeParams) -> FloatArray:
    height, width = pixels.shape[:2]
    window = (2 * params.morph_wing + 1, 1, 1)
    # opening removes ridges, closing removes valleys, both narrower than the window
    smoothed = ndimage.grey_closing(
        ndimage.grey_opening(pixels, size=window, mode="nearest"),
        size=window,
        mode="nearest",
    )
    derivative = np.zeros_like(smoothed)
    derivative[1:] = smoothed[1:] - smoothed[:-1]
    magnitude = np.abs(derivative.mean(axis=2))

    above = np.vstack([magnitude[:1], magnitude[:-1]])
    below = np.vstack([magnitude[1:], magnitude[-1:]])
    survivors = (
        (magnitude > params.nms_abs_threshold) & (magnitude > above) & (magnitude >= below)
    )

    kept = _filter_components(survivors, params.neighbor_reach, params.size_fraction, width)
    filled = np.where(kept, params.fill_value, 0.0)
    if not kept.any():
        return filled
    blurred = ndimage.gaussian_filter1d(
        filled,
        sigma=params.blur_sigma,
        axis=0,
        mode="nearest",
        truncate=params.blur_wing / params.blur_sigma,
    )
    return np.maximum(blurred, 0.0)


def _filter_components(
    survivors: np.ndarray, reach: int, size_fraction: float, width: int
) -> np.ndarray:
    """
    Group survivors into components where two pixels are neighbours when
    |d_col| <= reach and |d_row| <= |d_col|, then drop the small ones.
    """
    count = int(survivors.sum())
    if count == 0:
        return survivors
    height = survivors.shape[0]
    index = np.full(survivors.shape, -1, dtype=np.int64)
    index[survivors] = np.arange(count)

    sources: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    for dc in range(1, reach + 1):
        if dc >= width:
            break
        for dr in range(-dc, dc + 1):
            r0, r1 = max(0, -dr), height - max(0, dr)
            if r0 >= r1:
                continue
            a = index[r0:r1, : width - dc]
            b = index[r0 + dr : r1 + dr, dc:]
            linked = (a >= 0) & (b >= 0)
            sources.append(a[linked])
            targets.append(b[linked])

    if sources:
        src = np.concatenate(sources)
        dst = np.concatenate(targets)
    else:
        src = dst = np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(len(src)), (src, dst)), shape=(count, count))
    _, labels = connected_components(graph, directed=False)
    sizes = np.bincount(labels)
    threshold = size_fraction * min(float(sizes.max()), width / 2.0)
    keep_label = sizes >= threshold

    kept = np.zeros_like(survivors)
    kept[survivors] = keep_label[labels]
    return kept
