from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.internal.geometry import FloatArray, Point2, rescale_points

MIN_SIDE = 8


class SegmentError(ValueError):
    pass


@dataclass(frozen=True)
class RgbImage:
    """Immutable 8-bit RGB raster, `pixels` has shape (height, width, 3)."""

    pixels: NDArray[np.uint8]

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"Expected an (H, W, 3) raster, got shape {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(f"Image must be at least {MIN_SIDE}x{MIN_SIDE}, got {px.shape[1]}x{px.shape[0]}")
        px = np.ascontiguousarray(px, dtype=np.uint8)
        px.flags.writeable = False
        object.__setattr__(self, "pixels", px)

    @classmethod
    def from_array(cls, array: ArrayLike) -> RgbImage:
        """Accepts grayscale, RGB or RGBA arrays; alpha is discarded."""
        a = np.asarray(array)
        if a.ndim == 2:
            a = np.repeat(a[:, :, None], 3, axis=2)
        elif a.ndim == 3 and a.shape[2] == 4:
            a = a[:, :, :3]
        return cls(np.clip(a, 0, 255).astype(np.uint8))

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def size(self) -> tuple[int, int]:
        return self.width, self.height

    def transposed(self) -> RgbImage:
        return RgbImage(self.pixels.transpose(1, 0, 2))

    def rotated180(self) -> RgbImage:
        return RgbImage(self.pixels[::-1, ::-1])


@dataclass(frozen=True)
class ScaledImage:
    image: RgbImage
    factor: float
    """Source pixels per output pixel; multiply output coordinates by it to get back."""
    resampled: bool

    def to_source(self, points: ArrayLike) -> FloatArray:
        return rescale_points(points, self.factor)

    def from_source(self, points: ArrayLike) -> FloatArray:
        return rescale_points(points, 1.0 / self.factor)


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def resize_short_side(img: RgbImage, target_short: int) -> ScaledImage:
    """Isotropic resize so the shorter side becomes `target_short` (area averaging when shrinking)."""
    short = min(img.width, img.height)
    if short == target_short:
        return ScaledImage(img, 1.0, False)
    scale = target_short / short
    if img.width <= img.height:
        size = (target_short, _round_half_up(img.height * scale))
    else:
        size = (_round_half_up(img.width * scale), target_short)
    interpolation = cv2.INTER_AREA if scale < 1 else cv2.INTER_LINEAR
    out = cv2.resize(np.asarray(img.pixels), size, interpolation=interpolation)
    return ScaledImage(RgbImage(out), short / target_short, True)


def downscale_working(img: RgbImage, target_short: int = 240) -> ScaledImage:
    """Shrink to the working resolution; images already at or below it come back unchanged."""
    if min(img.width, img.height) <= target_short:
        return ScaledImage(img, 1.0, False)
    return resize_short_side(img, target_short)


@dataclass(frozen=True, slots=True)
class Similarity:
    """
    Maps source coordinates onto strip coordinates: the source direction at
    angle `rotation` becomes the strip's +x axis, lengths are multiplied by
    `scale`, then `translation` is added.
    """

    scale: float
    rotation: float
    translation: tuple[float, float]

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("Similarity scale must be positive")

    def _rotation(self) -> FloatArray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        # rotation by -angle
        return np.array([[c, s], [-s, c]])

    def apply(self, points: ArrayLike) -> FloatArray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return self.scale * p @ self._rotation().T + np.asarray(self.translation)

    def inverse(self, points: ArrayLike) -> FloatArray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2) - np.asarray(self.translation)
        return (p @ self._rotation()) / self.scale


def extract_strip(
    img: RgbImage,
    segment: tuple[Point2, Point2],
    vicinity_working: float = 2.0,
    scale: float = 3.0,
) -> tuple[RgbImage, Similarity]:
    """
    Resample the neighbourhood of a working-resolution segment from the image
    `img` (which is `scale` times the working resolution) into a horizontal
    strip whose central row runs along the segment.
    """
    p0 = np.asarray(segment[0], dtype=np.float64)
    p1 = np.asarray(segment[1], dtype=np.float64)
    length = float(np.linalg.norm(p1 - p0))
    if length < 1e-9:
        raise SegmentError("Cannot extract a strip along a zero-length segment")
    width = _round_half_up(scale * length) + 1
    half = vicinity_working * scale
    height = _round_half_up(2 * half) + 1
    if width < MIN_SIDE:
        raise SegmentError(f"Segment of length {length:.2f} px is too short for a strip")

    angle = math.atan2(float(p1[1] - p0[1]), float(p1[0] - p0[0]))
    base = Similarity(scale, angle, (0.0, 0.0))
    origin = base.apply(p0)[0]
    sim = Similarity(scale, angle, (float(-origin[0]), float(half - origin[1])))

    u, v = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    working = sim.inverse(np.stack([u.ravel(), v.ravel()], axis=1))
    source = rescale_points(working, scale).reshape(height, width, 2).astype(np.float32)
    strip = cv2.remap(
        np.asarray(img.pixels),
        source[..., 0],
        source[..., 1],
        interpolation=cv2.INTER_LINEAR,
        borderMode=cv2.BORDER_REPLICATE,
    )
    return RgbImage(strip), sim


def working_factor(img: RgbImage, target_short: int = 240) -> float:
    """Source pixels per working pixel, as produced by `downscale_working`."""
    short = min(img.width, img.height)
    return short / target_short if short > target_short else 1.0
