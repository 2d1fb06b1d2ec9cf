"""
Recovery of a missing document side from three detected lines.

Two of the lines are opposite sides (the pair), the third is adjacent to
both. With a known focal length and aspect ratio the document plane is fixed
up to scale: the pair's vanishing direction and the third line give both
in-plane directions, and the third side's length fixes the pair's length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from app.internal.geometry import CameraIntrinsics, FloatArray, HomoLine, Quad, convexity_sign

PairKind = Literal["horizontal", "vertical"]

_EPS = 1e-12


@dataclass(frozen=True)
class ReconstructedBatch:
    vertices: FloatArray
    """Shape (T, 4, 2); sides 0 and 2 are the horizontal family."""
    valid: NDArray[np.bool_]
    restored_side: int
    """Index of the side that was not detected."""


def _unit(v: FloatArray) -> tuple[FloatArray, NDArray[np.bool_]]:
    norm = np.linalg.norm(v, axis=-1)
    ok = norm > _EPS
    return v / np.where(ok, norm, 1.0)[..., None], ok


def reconstruct_batch(
    pair_a: ArrayLike,
    pair_b: ArrayLike,
    third: ArrayLike,
    ratio: ArrayLike,
    mirror: ArrayLike,
    pair_kind: PairKind,
    cam: CameraIntrinsics,
) -> ReconstructedBatch:
    """
    Vectorised reconstruction. Line arguments are homogeneous vectors of
    shape (T, 3); `ratio` is the horizontal over vertical side length and
    `mirror` (+1 or -1) picks which way from the third side the document
    extends.

    A horizontal pair produces vertices (P1, Q1, Q2, P2) with the restored
    side 1; a vertical pair produces (P1, P2, Q2, Q1) with the restored side 2.
    """
    la = np.asarray(pair_a, dtype=np.float64).reshape(-1, 3)
    lb = np.asarray(pair_b, dtype=np.float64).reshape(-1, 3)
    lt = np.asarray(third, dtype=np.float64).reshape(-1, 3)
    r = np.asarray(ratio, dtype=np.float64).reshape(-1)
    sign = np.asarray(mirror, dtype=np.float64).reshape(-1)

    # direction shared by the pair, and the in-plane direction of the third side
    pair_dir, ok = _unit(cam.directions(np.cross(la, lb)))
    third_dir, ok_third = _unit(np.cross(pair_dir, cam.plane_normal(lt)))
    ok &= ok_third
    normal, ok_normal = _unit(np.cross(pair_dir, third_dir))
    ok &= ok_normal

    h1 = np.cross(la, lt)
    h2 = np.cross(lb, lt)
    w1, w2 = h1[:, 2], h2[:, 2]
    ok &= (np.abs(w1) > _EPS * np.linalg.norm(h1, axis=1)) & (
        np.abs(w2) > _EPS * np.linalg.norm(h2, axis=1)
    )
    p1 = h1[:, :2] / np.where(ok, w1, 1.0)[:, None]
    p2 = h2[:, :2] / np.where(ok, w2, 1.0)[:, None]

    d1 = cam.rays(p1)
    d2 = cam.rays(p2)
    s1 = np.einsum("ti,ti->t", d1, normal)
    flip = np.where(s1 < 0, -1.0, 1.0)
    s1 = s1 * flip
    s2 = np.einsum("ti,ti->t", d2, normal) * flip
    # both corners must lie on the same side of the horizon
    scale = np.linalg.norm(d1, axis=1)
    ok &= (s1 > 1e-9 * scale) & (s2 > 1e-9 * scale)
    s1 = np.where(ok, s1, 1.0)
    s2 = np.where(ok, s2, 1.0)
    x1 = d1 / s1[:, None]
    x2 = d2 / s2[:, None]
    known = np.linalg.norm(x1 - x2, axis=1)
    ok &= known > _EPS

    if pair_kind == "horizontal":
        length = r * known
    else:
        length = known / np.where(r > 0, r, 1.0)
    step = (sign * length)[:, None] * pair_dir
    q1 = x1 + step
    q2 = x2 + step
    # the new corners must stay in front of the camera
    ok &= (q1[:, 2] > _EPS) & (q2[:, 2] > _EPS)
    q1_img = cam.project(np.where(ok[:, None], q1, 1.0))
    q2_img = cam.project(np.where(ok[:, None], q2, 1.0))

    if pair_kind == "horizontal":
        vertices = np.stack([p1, q1_img, q2_img, p2], axis=1)
        restored = 1
    else:
        vertices = np.stack([p1, p2, q2_img, q1_img], axis=1)
        restored = 2
    ok &= np.all(np.isfinite(vertices), axis=(1, 2))
    vertices = np.where(ok[:, None, None], vertices, 0.0)
    return ReconstructedBatch(vertices=vertices, valid=ok, restored_side=restored)


def in_frame_count(vertices: ArrayLike, width: int, height: int, expand: float) -> NDArray[np.int64]:
    """Vertices inside the image rectangle grown by `expand` of its size on every side."""
    v = np.asarray(vertices, dtype=np.float64)
    mx, my = expand * width, expand * height
    inside = (
        (v[..., 0] >= -0.5 - mx)
        & (v[..., 0] <= width - 0.5 + mx)
        & (v[..., 1] >= -0.5 - my)
        & (v[..., 1] <= height - 0.5 + my)
    )
    return inside.sum(axis=-1)


def reconstruct_fourth_side(
    pair: tuple[HomoLine, HomoLine],
    third: HomoLine,
    r: float,
    cam: CameraIntrinsics,
    frame: tuple[int, int] | None = None,
    expand: float = 0.25,
) -> list[Quad]:
    """
    Every document quad consistent with the three lines, trying the aspect
    both ways and both directions from the third side. Only convex quads
    with at least three vertices in the (grown) frame are returned. The frame
    defaults to the image implied by a centred principal point.
    """
    if not r > 0:
        raise ValueError("Aspect ratio must be positive")
    if frame is None:
        frame = (
            int(round(2 * cam.principal.x + 1)),
            int(round(2 * cam.principal.y + 1)),
        )
    kind: PairKind = "vertical" if third.orientation == "horizontal" else "horizontal"
    ratios = [r] if abs(r - 1.0 / r) < 1e-12 else [r, 1.0 / r]
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
    keep = (
        batch.valid
        & (convexity_sign(batch.vertices) != 0)
        & (in_frame_count(batch.vertices, frame[0], frame[1], expand) >= 3)
    )
    return [Quad.from_points(v) for v in batch.vertices[keep]]
