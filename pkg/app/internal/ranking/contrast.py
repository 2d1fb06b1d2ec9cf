from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cmp_to_key
from typing import Callable, Sequence

import cv2
import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.internal.env_settings import ContrastConfig
from app.internal.geometry import FloatArray, Quad, homography_from_points
from app.internal.imaging import RgbImage
from app.internal.ranking.candidates import ScoredQuad


@dataclass(frozen=True)
class ColorHistogram:
    """Joint RGB histogram normalised to sum 1 (all zeros for no samples)."""

    counts: FloatArray
    bins: int

    @classmethod
    def from_samples(cls, samples: ArrayLike, bins: int = 8) -> ColorHistogram:
        s = np.asarray(samples, dtype=np.int64).reshape(-1, 3)
        index = (s * bins) // 256
        flat = (index[:, 0] * bins + index[:, 1]) * bins + index[:, 2]
        counts = np.bincount(flat, minlength=bins**3).astype(np.float64)
        total = counts.sum()
        if total > 0:
            counts /= total
        return cls(counts, bins)


def chi_square(h1: ColorHistogram, h2: ColorHistogram) -> float:
    """Sum of (h1 - h2)^2 / (h1 + h2) over bins, empty bins contributing nothing."""
    if h1.bins != h2.bins:
        raise ValueError("Histograms must have the same number of bins")
    a, b = h1.counts, h2.counts
    return float(np.sum((a - b) ** 2 / (a + b + 1e-12)))


@dataclass(frozen=True)
class NormalizedRegions:
    """
    The quad warped to an upright rectangle inside a canvas with margins.
    Masks exclude canvas pixels whose source lies outside the image.
    """

    canvas: NDArray[np.uint8]
    inner_mask: NDArray[np.bool_]
    outer_mask: NDArray[np.bool_]

    def inner_samples(self) -> NDArray[np.uint8]:
        return self.canvas[self.inner_mask]

    def outer_samples(self) -> NDArray[np.uint8]:
        return self.canvas[self.outer_mask]


def _document_corners(q: Quad, r: float) -> FloatArray:
    """
    Quad vertices rolled so that sides 0 and 2 map to the document width,
    choosing whichever orientation matches r better.
    """
    v = q.array()
    lengths = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    vertical = lengths[1] + lengths[3]
    ratio = (lengths[0] + lengths[2]) / vertical if vertical > 0 else math.inf
    if ratio <= 0 or not math.isfinite(ratio):
        return v
    if abs(math.log(ratio) - math.log(r)) > abs(math.log(ratio) + math.log(r)):
        return np.roll(v, -1, axis=0)
    return v


def normalize_regions(img: RgbImage, q: Quad, r: float, cfg: ContrastConfig = ContrastConfig()) -> NormalizedRegions:
    doc_h = cfg.norm_height
    doc_w = max(1, int(round(doc_h * r)))
    mx = int(round(cfg.outer_margin * doc_w))
    my = int(round(cfg.outer_margin * doc_h))
    width, height = doc_w + 2 * mx, doc_h + 2 * my
    target = np.array(
        [[mx, my], [mx + doc_w, my], [mx + doc_w, my + doc_h], [mx, my + doc_h]],
        dtype=np.float64,
    )
    h = homography_from_points(_document_corners(q, r), target)
    canvas = cv2.warpPerspective(
        np.asarray(img.pixels),
        h.matrix,
        (width, height),
        flags=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_CONSTANT,
        borderValue=(0, 0, 0),
    )

    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    source = h.inverse().apply(np.stack([xs.ravel(), ys.ravel()], axis=1)).reshape(height, width, 2)
    valid = (
        (source[..., 0] >= -0.5)
        & (source[..., 0] <= img.width - 0.5)
        & (source[..., 1] >= -0.5)
        & (source[..., 1] <= img.height - 0.5)
    )

    in_doc = (xs >= mx) & (xs < mx + doc_w) & (ys >= my) & (ys < my + doc_h)
    ix, iy = cfg.inner_margin * doc_w, cfg.inner_margin * doc_h
    inner = (xs >= mx + ix) & (xs < mx + doc_w - ix) & (ys >= my + iy) & (ys < my + doc_h - iy)
    return NormalizedRegions(canvas=canvas, inner_mask=inner & valid, outer_mask=~in_doc & valid)


def contrast_score(img: RgbImage, q: Quad, r: float, cfg: ContrastConfig = ContrastConfig()) -> float:
    """Scaled chi-square distance between inner and outer colour histograms."""
    regions = normalize_regions(img, q, r, cfg)
    inner = ColorHistogram.from_samples(regions.inner_samples(), cfg.bins_per_channel)
    outer = ColorHistogram.from_samples(regions.outer_samples(), cfg.bins_per_channel)
    return cfg.score_scale * chi_square(inner, outer)


class CompareCandidates:
    """Orders scored candidates best first: combined score, contour score, enumeration order."""

    def __init__(self):
        self.compare_order: list[Callable[[ScoredQuad, ScoredQuad], int]] = [
            self._compare_combined,
            self._compare_contour,
            self._compare_order,
        ]

    def __call__(self, a: ScoredQuad, b: ScoredQuad) -> int:
        for compare in self.compare_order:
            result = compare(a, b)
            if result != 0:
                return result
        return 0

    @staticmethod
    def _sign(value: float) -> int:
        return (value > 0) - (value < 0)

    def _compare_combined(self, a: ScoredQuad, b: ScoredQuad) -> int:
        return self._sign((b.combined or 0.0) - (a.combined or 0.0))

    def _compare_contour(self, a: ScoredQuad, b: ScoredQuad) -> int:
        return self._sign(b.contour - a.contour)

    def _compare_order(self, a: ScoredQuad, b: ScoredQuad) -> int:
        return a.order - b.order


def rank_final(
    candidates: Sequence[ScoredQuad],
    img: RgbImage,
    r: float,
    cfg: ContrastConfig = ContrastConfig(),
    k: int = 4,
) -> ScoredQuad | None:
    """
    Re-rank the K best candidates by contour score with the combined score
    contrast + coeff * contour. Returns the winner with both scores filled in.
    """
    if not candidates:
        return None
    shortlist = sorted(candidates, key=lambda c: (-c.contour, c.order))[:k]
    scored: list[ScoredQuad] = []
    for candidate in shortlist:
        contrast = contrast_score(img, candidate.quad, r, cfg)
        scored.append(
            replace(
                candidate,
                contrast=contrast,
                combined=contrast + cfg.combine_coeff * candidate.contour,
            )
        )
    scored.sort(key=cmp_to_key(CompareCandidates()))
    return scored[0]
