"""
Sub-pixel refinement of the chosen quad at three times the working
resolution. Each side is re-detected inside a thin strip resampled along it;
sides that cannot be improved keep their coarse position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from app.internal.edges import compute_edge_map
from app.internal.env_settings import EdgeParams, PipelineConfig, RefineSettings
from app.internal.geometry import (
    CameraIntrinsics,
    DegenerateIntersection,
    DegenerateQuad,
    FloatArray,
    HomoLine,
    Point2,
    Quad,
    convexity_sign,
    intersect_lines,
    rescale_points,
)
from app.internal.hough import BandGeometry, fht, inverse_peak, next_power_of_two, select_peaks
from app.internal.imaging import (
    RgbImage,
    SegmentError,
    extract_strip,
    resize_short_side,
    working_factor,
)
from app.internal.ranking.reconstruct import PairKind, reconstruct_batch
from app.util.log import logger


@dataclass(frozen=True, slots=True)
class RefinedSide:
    line: HomoLine
    """In the coordinates of the upscaled image."""
    refined: bool


def refine_side(
    img3x: RgbImage,
    side: tuple[Point2, Point2],
    settings: RefineSettings = RefineSettings(),
    edges: EdgeParams = EdgeParams(),
) -> RefinedSide:
    """
    Strongest near-horizontal line of the strip along a working-resolution
    side, mapped into the upscaled image. Falls back to the scaled side.
    """
    p0 = rescale_points(side[0], settings.scale)
    p1 = rescale_points(side[1], settings.scale)
    coarse = HomoLine.through(Point2(*p0), Point2(*p1))
    length = math.dist(side[0], side[1])
    if length < settings.min_side_px:
        return RefinedSide(coarse, False)
    try:
        strip, sim = extract_strip(img3x, side, settings.vicinity, settings.scale)
    except SegmentError:
        return RefinedSide(coarse, False)

    edge_map = compute_edge_map(strip, "horizontal", edges)
    height, width = edge_map.values.shape
    if width < 2 or not edge_map.values.any():
        return RefinedSide(coarse, False)
    n_pad = next_power_of_two(width)
    max_shift = math.ceil((height - 1) * (n_pad - 1) / (width - 1))
    band = BandGeometry(0, 0, width, height)
    houghs = [fht(edge_map.values, family, band, max_shift) for family in ("horz+", "horz-")]
    global_max = max(h.selectable_max() for h in houghs)
    peaks = select_peaks(houghs, 1, 1.0, 1.0, global_max)
    if not peaks:
        return RefinedSide(coarse, False)
    by_family = {h.family: h for h in houghs}
    detected = inverse_peak(peaks[0], by_family[peaks[0].family])

    working = sim.inverse(np.array(detected.endpoints, dtype=np.float64))
    upscaled = rescale_points(working, settings.scale)
    try:
        line = HomoLine.through(Point2(*upscaled[0]), Point2(*upscaled[1]))
    except DegenerateIntersection:
        return RefinedSide(coarse, False)
    return RefinedSide(line, True)


def _angle_between(l1: HomoLine, l2: HomoLine) -> float:
    cos = abs(l1.a * l2.a + l1.b * l2.b)
    return math.degrees(math.acos(min(1.0, cos)))


def quad_from_lines(lines: list[HomoLine], min_angle_deg: float) -> FloatArray | None:
    """Vertex i is the intersection of sides i - 1 and i; None if invalid."""
    vertices: list[tuple[float, float]] = []
    for i in range(4):
        prev, cur = lines[i - 1], lines[i]
        if _angle_between(prev, cur) < min_angle_deg:
            return None
        try:
            point = intersect_lines(prev, cur)
        except DegenerateIntersection:
            return None
        if point.is_infinite:
            return None
        vertices.append((point.x, point.y))
    v = np.array(vertices)
    if convexity_sign(v) == 0:
        return None
    return v


def _deviation(coarse: tuple[FloatArray, FloatArray], line: HomoLine) -> float:
    return max(abs(line.signed_distance(p)) for p in coarse)


def restore_side_line(
    lines: list[HomoLine],
    side: int,
    aspect: float,
    cam: CameraIntrinsics,
    coarse: tuple[FloatArray, FloatArray],
) -> HomoLine | None:
    """
    Recompute side `side` from the three other sides and the aspect ratio.
    Of the four aspect and direction choices the one nearest to the coarse
    side is returned, or None when none comes within a tenth of its length.
    """
    pair = (lines[(side + 1) % 4], lines[(side + 3) % 4])
    third = lines[(side + 2) % 4]
    kind: PairKind = "vertical" if third.orientation == "horizontal" else "horizontal"
    ratios = [aspect, 1.0 / aspect]
    combos = [(ratio, sign) for ratio in ratios for sign in (1.0, -1.0)]
    batch = reconstruct_batch(
        np.repeat(pair[0].vector[None], len(combos), axis=0),
        np.repeat(pair[1].vector[None], len(combos), axis=0),
        np.repeat(third.vector[None], len(combos), axis=0),
        [c[0] for c in combos],
        [c[1] for c in combos],
        kind,
        cam,
    )
    tolerance = 0.1 * math.dist(coarse[0], coarse[1])
    best: HomoLine | None = None
    best_deviation = math.inf
    rs = batch.restored_side
    for vertices in batch.vertices[batch.valid]:
        try:
            line = HomoLine.through(Point2(*vertices[rs]), Point2(*vertices[(rs + 1) % 4]))
        except DegenerateIntersection:
            continue
        deviation = _deviation(coarse, line)
        if deviation < best_deviation:
            best, best_deviation = line, deviation
    if best is None or best_deviation > tolerance:
        return None
    return best


def refine_quad(
    original: RgbImage,
    q_working: Quad,
    cfg: PipelineConfig = PipelineConfig(),
    restored_side: int | None = None,
    aspect: float | None = None,
) -> Quad:
    """
    Refine every side of a working-resolution quad and return the quad in
    original image coordinates. Refined sides that make the quad invalid are
    reverted to coarse ones, largest deviation first. A `restored_side` has
    no border to refine; with `aspect` given it is recomputed from the other
    three refined sides instead.
    """
    settings = cfg.refine
    factor = working_factor(original, cfg.working_short)
    short = min(original.width, original.height)
    target = int(round(short / factor * settings.scale))
    upscaled = resize_short_side(original, target)
    up_factor = upscaled.factor

    sides = q_working.sides()
    coarse_points = [
        (rescale_points(p, settings.scale), rescale_points(q, settings.scale)) for p, q in sides
    ]
    coarse = [HomoLine.through(Point2(*p), Point2(*q)) for p, q in coarse_points]
    refined = [
        RefinedSide(coarse[i], False)
        if i == restored_side
        else refine_side(upscaled.image, side, settings, cfg.edges)
        for i, side in enumerate(sides)
    ]
    if restored_side is not None and aspect is not None:
        cam = CameraIntrinsics.for_image(upscaled.image.width, upscaled.image.height, cfg.focal_coeff)
        line = restore_side_line(
            [r.line for r in refined], restored_side, aspect, cam, coarse_points[restored_side]
        )
        if line is not None:
            refined[restored_side] = RefinedSide(line, True)

    use = [r.refined for r in refined]
    vertices: FloatArray | None = None
    while True:
        lines = [refined[i].line if use[i] else coarse[i] for i in range(4)]
        vertices = quad_from_lines(lines, settings.min_angle_deg)
        if vertices is not None:
            break
        active = [i for i in range(4) if use[i]]
        if not active:
            break
        worst = max(active, key=lambda i: _deviation(coarse_points[i], refined[i].line))
        use[worst] = False

    reverted = sum(1 for i in range(4) if refined[i].refined and not use[i])
    if vertices is None:
        vertices = rescale_points(q_working.array(), settings.scale)
    logger.debug("Refined quad", refined_sides=sum(use), reverted_sides=reverted)
    try:
        return Quad.from_points(rescale_points(vertices, up_factor))
    except DegenerateQuad:
        return Quad.from_points(rescale_points(q_working.array(), factor))
