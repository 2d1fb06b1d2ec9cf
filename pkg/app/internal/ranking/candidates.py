"""
Enumeration of document quad candidates from detected lines.

Four-line candidates take two lines of each orientation; three-line
candidates take an opposite pair and one adjacent line and restore the
fourth side from the known aspect ratio. Every family keeps its own top-K
by contour score.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from app.internal.edges import EdgeMaps
from app.internal.env_settings import CandidateConfig
from app.internal.geometry import (
    CameraIntrinsics,
    DegenerateQuad,
    FloatArray,
    Quad,
    UnrectifiableQuad,
    canonical_order,
    convexity_sign,
    rectify_batch,
    rectify_to_parallelogram,
)
from app.internal.hough import DetectedLine
from app.internal.ranking.contour import (
    ProfileBank,
    contour_scores,
    segment_stats,
)
from app.internal.ranking.reconstruct import (
    ReconstructedBatch,
    in_frame_count,
    reconstruct_batch,
)
from app.util.log import logger

Provenance = Literal["four-line", "three-line"]

# candidates scored per vectorised step while filling the heap
SCORE_CHUNK = 512


@dataclass(frozen=True)
class ScoredQuad:
    quad: Quad
    contour: float
    provenance: Provenance
    order: int
    """Position in the enumeration, used to break score ties."""
    lines: tuple[DetectedLine, ...] = field(default=(), repr=False)
    restored_side: int | None = None
    restored_coverage: float | None = None
    """Fraction of the restored side backed by edges."""
    contrast: float | None = None
    combined: float | None = None


def _projective_mask(
    aspect: FloatArray, angle: FloatArray, r: float, cfg: CandidateConfig
) -> NDArray[np.bool_]:
    with np.errstate(invalid="ignore"):
        angle_ok = np.abs(angle - 90.0) <= cfg.angle_tol
        aspect_ok = (np.abs(aspect / r - 1.0) <= cfg.aspect_tol) | (
            np.abs(aspect * r - 1.0) <= cfg.aspect_tol
        )
    return np.nan_to_num(angle_ok & aspect_ok, nan=False).astype(bool)


def passes_projective_filter(
    q: Quad, cam: CameraIntrinsics, r: float, cfg: CandidateConfig = CandidateConfig()
) -> bool:
    """
    Whether the quad's inverse image is close to a rectangle with aspect r
    (either way round).
    """
    try:
        p = rectify_to_parallelogram(q, cam)
    except UnrectifiableQuad:
        return False
    return bool(_projective_mask(np.array([p.aspect]), np.array([p.corner_angle]), r, cfg)[0])


def _shape_mask(
    vertices: FloatArray, width: int, height: int, cfg: CandidateConfig
) -> NDArray[np.bool_]:
    finite = np.all(np.isfinite(vertices), axis=(-2, -1))
    v = np.where(finite[..., None, None], vertices, 0.0)
    edges = np.roll(v, -1, axis=-2) - v
    shortest = np.linalg.norm(edges, axis=-1).min(axis=-1)
    x, y = v[..., 0], v[..., 1]
    area = 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=-1) - np.roll(x, -1, axis=-1) * y, axis=-1))
    return (
        finite
        & (convexity_sign(v) != 0)
        & (shortest >= cfg.min_side_px)
        & (area >= cfg.min_area_fraction * width * height)
        & (in_frame_count(v, width, height, cfg.frame_expand) >= 3)
    )


def _bounds_mask(
    w: FloatArray, c: FloatArray, wp: FloatArray, fill: float, cfg: CandidateConfig
) -> NDArray[np.bool_]:
    """All given sides within the bounds; w and w' are compared in fill units."""
    wn, wpn = w / fill, wp / fill
    ok = (
        (wn >= cfg.w_min)
        & (wn <= cfg.w_max)
        & (c >= cfg.c_min)
        & (c <= cfg.c_max)
        & (wpn >= cfg.w_prime_min)
        & (wpn <= cfg.w_prime_max)
    )
    return np.all(ok, axis=-1)


@dataclass(frozen=True)
class CandidateBatch:
    """
    Candidates that survived the geometric and statistical filters, in
    enumeration order. Side stats of a restored side are NaN until computed.
    """

    provenance: Provenance
    vertices: FloatArray
    w: FloatArray
    c: FloatArray
    wp: FloatArray
    order: NDArray[np.int64]
    side_lines: NDArray[np.int64]
    """Index into the combined (horizontal then vertical) line list per side, -1 when restored."""
    restored_side: int | None
    enumerated: int
    """Number of combinations enumerated before filtering."""

    def __len__(self) -> int:
        return len(self.order)


def _empty_batch(provenance: Provenance, restored: int | None, enumerated: int = 0) -> CandidateBatch:
    return CandidateBatch(
        provenance=provenance,
        vertices=np.zeros((0, 4, 2)),
        w=np.zeros((0, 4)),
        c=np.zeros((0, 4)),
        wp=np.zeros((0, 4)),
        order=np.zeros(0, dtype=np.int64),
        side_lines=np.zeros((0, 4), dtype=np.int64),
        restored_side=restored,
        enumerated=enumerated,
    )


def _pairs(n: int) -> NDArray[np.int64]:
    return np.array(list(itertools.combinations(range(n), 2)), dtype=np.int64).reshape(-1, 2)


def _side_stats(
    bank: ProfileBank, vertices: FloatArray, side_lines: NDArray[np.int64], sides: Sequence[int], flank: int
) -> tuple[FloatArray, FloatArray, FloatArray]:
    n = len(vertices)
    w = np.full((n, 4), np.nan)
    c = np.full((n, 4), np.nan)
    wp = np.full((n, 4), np.nan)
    for side in sides:
        sw, swp, sc = bank.stats(
            side_lines[:, side], vertices[:, side], vertices[:, (side + 1) % 4], flank
        )
        w[:, side], c[:, side], wp[:, side] = sw, sc, swp
    return w, c, wp


def four_line_batch(
    h_lines: Sequence[DetectedLine],
    v_lines: Sequence[DetectedLine],
    bank: ProfileBank,
    cam: CameraIntrinsics,
    r: float,
    cfg: CandidateConfig,
    frame: tuple[int, int],
    fill: float,
) -> CandidateBatch:
    """
    All quads bounded by two horizontal and two vertical lines, outer loop
    over horizontal pairs. Corners are (h_i x v_k, h_i x v_l, h_j x v_l, h_j x v_k).
    """
    nh, nv = len(h_lines), len(v_lines)
    if nh < 2 or nv < 2:
        return _empty_batch("four-line", None)
    hv = np.array([line.line.vector for line in h_lines])
    vv = np.array([line.line.vector for line in v_lines])
    corners = np.cross(hv[:, None, :], vv[None, :, :])
    hp, vp = _pairs(nh), _pairs(nv)
    hi = np.repeat(hp[:, 0], len(vp))
    hj = np.repeat(hp[:, 1], len(vp))
    vk = np.tile(vp[:, 0], len(hp))
    vl = np.tile(vp[:, 1], len(hp))
    enumerated = len(hi)

    homo = np.stack([corners[hi, vk], corners[hi, vl], corners[hj, vl], corners[hj, vk]], axis=1)
    w_h = homo[..., 2]
    finite = np.all(np.abs(w_h) > 1e-12 * np.linalg.norm(homo, axis=-1), axis=1)
    vertices = homo[..., :2] / np.where(np.abs(w_h) > 0, w_h, 1.0)[..., None]
    keep = finite & _shape_mask(vertices, frame[0], frame[1], cfg)
    idx = np.nonzero(keep)[0]

    rect = rectify_batch(vertices[idx], cam)
    idx = idx[rect.valid & _projective_mask(rect.aspect, rect.corner_angle, r, cfg)]

    side_lines = np.stack([hi, nh + vl, hj, nh + vk], axis=1)[idx]
    w, c, wp = _side_stats(bank, vertices[idx], side_lines, range(4), cfg.flank_length)
    ok = _bounds_mask(w, c, wp, fill, cfg)
    idx, side_lines = idx[ok], side_lines[ok]
    return CandidateBatch(
        provenance="four-line",
        vertices=vertices[idx],
        w=w[ok],
        c=c[ok],
        wp=wp[ok],
        order=idx.astype(np.int64),
        side_lines=side_lines,
        restored_side=None,
        enumerated=enumerated,
    )


def _three_line_case(
    pair_lines: Sequence[DetectedLine],
    third_lines: Sequence[DetectedLine],
    pair_kind: Literal["horizontal", "vertical"],
    pair_offset: int,
    third_offset: int,
    ratios: Sequence[float],
    cam: CameraIntrinsics,
) -> tuple[ReconstructedBatch, NDArray[np.int64]] | None:
    pairs = _pairs(len(pair_lines))
    grid = np.meshgrid(
        np.arange(len(pairs)),
        np.arange(len(third_lines)),
        np.arange(len(ratios)),
        np.arange(2),
        indexing="ij",
    )
    p_idx, t_idx, r_idx, m_idx = (g.ravel() for g in grid)
    if len(p_idx) == 0:
        return None
    pv = np.array([line.line.vector for line in pair_lines])
    tv = np.array([line.line.vector for line in third_lines])
    a = pairs[p_idx, 0]
    b = pairs[p_idx, 1]
    batch = reconstruct_batch(
        pv[a],
        pv[b],
        tv[t_idx],
        np.asarray(ratios)[r_idx],
        np.where(m_idx == 0, 1.0, -1.0),
        pair_kind,
        cam,
    )
    third = third_offset + t_idx
    restored = np.full_like(third, -1)
    if pair_kind == "horizontal":
        side_lines = np.stack([pair_offset + a, restored, pair_offset + b, third], axis=1)
    else:
        side_lines = np.stack([third, pair_offset + b, restored, pair_offset + a], axis=1)
    return batch, side_lines


def three_line_batch(
    h_lines: Sequence[DetectedLine],
    v_lines: Sequence[DetectedLine],
    bank: ProfileBank,
    cam: CameraIntrinsics,
    r: float,
    cfg: CandidateConfig,
    frame: tuple[int, int],
    fill: float,
    order_offset: int = 0,
) -> list[CandidateBatch]:
    """
    Horizontal pairs with one vertical line first, then vertical pairs with
    one horizontal line. Bounds apply to the three detected sides only.
    """
    nh = len(h_lines)
    ratios = [r] if abs(r - 1.0 / r) < 1e-12 else [r, 1.0 / r]
    out: list[CandidateBatch] = []
    offset = order_offset
    cases = (
        (h_lines, v_lines, "horizontal", 0, nh),
        (v_lines, h_lines, "vertical", nh, 0),
    )
    for pair_lines, third_lines, kind, pair_offset, third_offset in cases:
        case = _three_line_case(
            pair_lines, third_lines, kind, pair_offset, third_offset, ratios, cam  # type: ignore[arg-type]
        )
        if case is None:
            continue
        rec, side_lines = case
        enumerated = len(rec.valid)
        keep = rec.valid & _shape_mask(rec.vertices, frame[0], frame[1], cfg)
        idx = np.nonzero(keep)[0]
        known = [s for s in range(4) if s != rec.restored_side]
        w, c, wp = _side_stats(bank, rec.vertices[idx], side_lines[idx], known, cfg.flank_length)
        ok = _bounds_mask(w[:, known], c[:, known], wp[:, known], fill, cfg)
        idx = idx[ok]
        out.append(
            CandidateBatch(
                provenance="three-line",
                vertices=rec.vertices[idx],
                w=w[ok],
                c=c[ok],
                wp=wp[ok],
                order=(offset + idx).astype(np.int64),
                side_lines=side_lines[idx],
                restored_side=rec.restored_side,
                enumerated=enumerated,
            )
        )
        offset += enumerated
    return out


def restored_side_stats(
    vertices: FloatArray, side: int, maps: EdgeMaps, flank: int
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """(w, w', c) of the restored side of every quad in `vertices` (N, 4, 2)."""
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 4, 2)
    return segment_stats(v[:, side], v[:, (side + 1) % 4], maps, flank)


def _counted_sides(restored: int | None) -> NDArray[np.bool_]:
    counted = np.ones(4, dtype=bool)
    if restored is not None:
        counted[restored] = False
    return counted


def score_bounds(batch: CandidateBatch, map_max: float) -> FloatArray:
    """
    Upper bound of every candidate's contour score. Exact for four-line
    candidates. A restored side adds at most `map_max` per raster sample to
    the reward and nothing to the coverage penalty.
    """
    restored = batch.restored_side
    if restored is None:
        return contour_scores(batch.w, batch.c, batch.wp)
    known = _counted_sides(restored)
    a = batch.vertices[:, restored]
    b = batch.vertices[:, (restored + 1) % 4]
    samples = np.floor(np.abs(b - a).max(axis=1)) + 2
    reward = batch.w[:, known].sum(axis=1) + samples * map_max
    misses = (1.0 - batch.c[:, known]).sum(axis=1)
    return reward / (1.0 + misses) - batch.wp[:, known].sum(axis=1)


def exact_scores(
    batch: CandidateBatch, rows: NDArray[np.int64], maps: EdgeMaps, flank: int
) -> tuple[FloatArray, FloatArray]:
    """Contour scores of the given rows and the coverage of their restored side (NaN if none)."""
    w, c, wp = batch.w[rows].copy(), batch.c[rows].copy(), batch.wp[rows].copy()
    restored = batch.restored_side
    if restored is None:
        return contour_scores(w, c, wp), np.full(len(rows), np.nan)
    sw, swp, sc = restored_side_stats(batch.vertices[rows], restored, maps, flank)
    w[:, restored], wp[:, restored], c[:, restored] = sw, swp, sc
    return contour_scores(w, c, wp, _counted_sides(restored)), sc


def _canonical_side(order: list[int], side: int) -> int:
    a, b = order.index(side), order.index((side + 1) % 4)
    return a if (a + 1) % 4 == b else b


def _make_candidate(
    batch: CandidateBatch, row: int, score: float, coverage: float, lines: Sequence[DetectedLine]
) -> ScoredQuad | None:
    vertices = batch.vertices[row]
    try:
        order = canonical_order(vertices)
        quad = Quad.from_points(vertices)
    except DegenerateQuad:
        return None
    restored = None
    if batch.restored_side is not None:
        restored = _canonical_side(order, batch.restored_side)
    return ScoredQuad(
        quad=quad,
        contour=score,
        provenance=batch.provenance,
        order=int(batch.order[row]),
        lines=tuple(lines[i] for i in batch.side_lines[row] if i >= 0),
        restored_side=restored,
        restored_coverage=None if restored is None else coverage,
    )


def select_top(
    batches: Sequence[CandidateBatch],
    k: int,
    lines: Sequence[DetectedLine],
    maps: EdgeMaps,
    cfg: CandidateConfig,
    early_rejection: bool = True,
) -> list[ScoredQuad]:
    """
    Size-K min-heap keyed by score, then by earlier enumeration. Candidates
    are visited by decreasing score bound and scored a chunk at a time. With
    early rejection the visit stops once a bound falls below the root, so
    only candidates that could still enter the heap get their restored side
    measured. Equal scores keep the earlier candidate.
    """
    batches = [b for b in batches if len(b)]
    if not batches or k <= 0:
        return []
    map_max = max(float(maps.horizontal.values.max()), float(maps.vertical.values.max()))
    bounds = np.concatenate([score_bounds(b, map_max) for b in batches])
    orders = np.concatenate([b.order for b in batches])
    owner = np.concatenate([np.full(len(b), i, dtype=np.int64) for i, b in enumerate(batches)])
    rows = np.concatenate([np.arange(len(b), dtype=np.int64) for b in batches])
    visit = np.lexsort((orders, -bounds))

    heap: list[tuple[float, int, ScoredQuad]] = []
    for start in range(0, len(visit), SCORE_CHUNK):
        chunk = visit[start : start + SCORE_CHUNK]
        if early_rejection and len(heap) == k:
            chunk = chunk[bounds[chunk] >= heap[0][0]]
            if not len(chunk):
                break
        scores = np.empty(len(chunk))
        coverage = np.empty(len(chunk))
        for i, batch in enumerate(batches):
            mine = np.nonzero(owner[chunk] == i)[0]
            if len(mine):
                scores[mine], coverage[mine] = exact_scores(
                    batch, rows[chunk[mine]], maps, cfg.flank_length
                )
        for j, entry in enumerate(chunk.tolist()):
            key = (float(scores[j]), -int(orders[entry]))
            if len(heap) == k and key <= heap[0][:2]:
                continue
            candidate = _make_candidate(
                batches[owner[entry]], int(rows[entry]), key[0], float(coverage[j]), lines
            )
            if candidate is None:
                continue
            if len(heap) < k:
                heapq.heappush(heap, (*key, candidate))
            else:
                heapq.heapreplace(heap, (*key, candidate))
    return [e[2] for e in sorted(heap, key=lambda e: (-e[0], -e[1]))]


def enumerate_candidates(
    h_lines: Sequence[DetectedLine],
    v_lines: Sequence[DetectedLine],
    maps: EdgeMaps,
    cam: CameraIntrinsics,
    r: float,
    cfg: CandidateConfig = CandidateConfig(),
    early_rejection: bool = True,
) -> list[ScoredQuad]:
    """
    Top-K four-line candidates followed by top-K three-line candidates, each
    group sorted by descending contour score.
    """
    if not r > 0:
        raise ValueError("Aspect ratio must be positive")
    lines = list(h_lines) + list(v_lines)
    frame = (maps.horizontal.width, maps.horizontal.height)
    fill = maps.horizontal.fill_value
    bank = ProfileBank.build(lines, maps)

    four = four_line_batch(h_lines, v_lines, bank, cam, r, cfg, frame, fill)
    three = three_line_batch(
        h_lines, v_lines, bank, cam, r, cfg, frame, fill, order_offset=four.enumerated
    )
    top_four = select_top([four], cfg.k, lines, maps, cfg, early_rejection)
    top_three = select_top(three, cfg.k, lines, maps, cfg, early_rejection)
    logger.debug(
        "Enumerated candidates",
        four_line=four.enumerated,
        four_line_kept=len(four),
        three_line=sum(b.enumerated for b in three),
        three_line_kept=sum(len(b) for b in three),
    )
    return top_four + top_three
