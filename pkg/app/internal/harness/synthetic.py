"""
Seeded renderer of camera-captured document scenes with exact ground truth.

A flat document of aspect r (width r, height 1 in plane units) is posed in
front of a pinhole camera that shares the pipeline's intrinsics model and
rendered onto a textured background at twice the output resolution.
"""

from __future__ import annotations

import math
from typing import Optional

import cv2
import numpy as np
import pydantic
from numpy.typing import NDArray
from pydantic import Field

from app.internal.geometry import (
    CameraIntrinsics,
    DegenerateQuad,
    FloatArray,
    Quad,
    homography_from_points,
    rescale_points,
)
from app.internal.metrics import GroundTruth
from app.internal.models import BackgroundKind
from app.internal.pipeline import TemplateSpec
from app.internal.imaging import RgbImage

MAX_ATTEMPTS = 100
SCENE_ASPECTS = (210.0 / 297.0, 1.5858)

Color = tuple[int, int, int]


class SceneGenerationError(RuntimeError):
    pass


class SceneSpec(pydantic.BaseModel, frozen=True):
    aspect: float = Field(default=210.0 / 297.0, gt=0)
    width: int = Field(default=480, ge=64)
    height: int = Field(default=640, ge=64)
    doc_color: Color = (240, 238, 230)
    clutter_lines: int = Field(default=0, ge=0)
    background: BackgroundKind = BackgroundKind.flat
    max_rotation_deg: float = Field(default=40.0, ge=0, le=60)
    fill_range: tuple[float, float] = (0.5, 0.75)
    """Longer document side over the short image side, before perspective."""
    max_offset: float = Field(default=0.06, ge=0)
    occluded_side: Optional[int] = Field(default=None, ge=0, le=3)
    """0 top, 1 right, 2 bottom, 3 left, in document orientation."""
    focal_coeff: float = Field(default=0.705, gt=0)
    supersample: int = Field(default=2, ge=1, le=4)
    seed: int = 0


class _Pose(pydantic.BaseModel, frozen=True):
    rotation: tuple[tuple[float, float, float], ...]
    translation: tuple[float, float, float]

    def apply(self, plane_points: FloatArray, aspect: float) -> FloatArray:
        """Document-plane (u, v) points to camera coordinates."""
        p = np.asarray(plane_points, dtype=np.float64)
        centred = np.stack([p[:, 0] - aspect / 2.0, p[:, 1] - 0.5, np.zeros(len(p))], axis=1)
        return centred @ np.asarray(self.rotation).T + np.asarray(self.translation)


def _document_corners(aspect: float) -> FloatArray:
    return np.array([[0.0, 0.0], [aspect, 0.0], [aspect, 1.0], [0.0, 1.0]])


def _sample_pose(rng: np.random.Generator, spec: SceneSpec, cam: CameraIntrinsics) -> _Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = math.radians(rng.uniform(0.0, spec.max_rotation_deg))
    rotation, _ = cv2.Rodrigues((axis * angle).reshape(3, 1))
    fill = rng.uniform(*spec.fill_range)
    depth = cam.focal_px * max(spec.aspect, 1.0) / (fill * min(spec.width, spec.height))
    tx = rng.uniform(-spec.max_offset, spec.max_offset) * depth * spec.width / cam.focal_px
    ty = rng.uniform(-spec.max_offset, spec.max_offset) * depth * spec.height / cam.focal_px
    return _Pose(
        rotation=tuple(tuple(float(x) for x in row) for row in rotation),
        translation=(float(tx), float(ty), float(depth)),
    )


def _project(pose: _Pose, cam: CameraIntrinsics, plane_points: FloatArray, aspect: float) -> FloatArray | None:
    camera = pose.apply(plane_points, aspect)
    if np.any(camera[:, 2] <= 1e-6):
        return None
    return cam.project(camera)


def _acceptable(corners: FloatArray, spec: SceneSpec) -> bool:
    try:
        quad = Quad.from_points(corners)
    except DegenerateQuad:
        return False
    inside = np.sum(
        (corners[:, 0] >= 0)
        & (corners[:, 0] <= spec.width - 1)
        & (corners[:, 1] >= 0)
        & (corners[:, 1] <= spec.height - 1)
    )
    sides = np.linalg.norm(np.roll(corners, -1, axis=0) - corners, axis=1)
    return bool(inside >= 3 and quad.area >= 0.05 * spec.width * spec.height and sides.min() >= 24)


def _two_colors(rng: np.random.Generator) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    base = rng.uniform(30, 120, size=3)
    other = np.clip(base + rng.uniform(25, 50) * rng.choice([-1.0, 1.0]), 0, 170)
    return base, other


def _background(rng: np.random.Generator, kind: BackgroundKind, width: int, height: int, ss: int) -> FloatArray:
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    match kind:
        case BackgroundKind.flat:
            color = rng.uniform(30, 150, size=3)
            return np.broadcast_to(color, (height, width, 3)).copy()
        case BackgroundKind.stripes:
            a, b = _two_colors(rng)
            theta = rng.uniform(0, math.pi)
            period = rng.uniform(0.2, 0.35) * min(width, height)
            phase = (xs * math.cos(theta) + ys * math.sin(theta)) % period
            return np.where((phase < period / 2)[..., None], a, b)
        case BackgroundKind.checker:
            a, b = _two_colors(rng)
            theta = rng.uniform(0, math.pi / 2)
            cell = rng.uniform(0.15, 0.3) * min(width, height)
            u = xs * math.cos(theta) + ys * math.sin(theta)
            v = -xs * math.sin(theta) + ys * math.cos(theta)
            odd = (np.floor(u / cell) + np.floor(v / cell)) % 2 == 1
            return np.where(odd[..., None], a, b)
        case BackgroundKind.noise:
            base = rng.uniform(50, 130, size=3)
            noise = rng.normal(0.0, 22.0, size=(height, width, 3))
            noise = cv2.GaussianBlur(noise, (0, 0), sigmaX=1.5 * ss)
            return np.clip(base + noise, 0, 170)


def _document_texture(rng: np.random.Generator, spec: SceneSpec, tex_h: int) -> FloatArray:
    tex_w = max(8, int(round(tex_h * spec.aspect)))
    tex = np.empty((tex_h, tex_w, 3), dtype=np.float32)
    tex[:] = spec.doc_color
    for _ in range(spec.clutter_lines):
        y = int(rng.uniform(0.12, 0.88) * tex_h)
        x0 = int(rng.uniform(0.1, 0.5) * tex_w)
        x1 = int(min(0.9 * tex_w, x0 + rng.uniform(0.15, 0.6) * tex_w))
        thickness = int(rng.integers(3, 9))
        shade = float(rng.uniform(20, 110))
        cv2.rectangle(tex, (x0, y), (x1, y + thickness), (shade, shade, shade), thickness=-1)
    return tex


def _cap_polygon(side: int, aspect: float, depth: float, inset: float = 0.01) -> FloatArray:
    """
    Plane region that merges one document side into a document-coloured cap.
    The cap is bounded by a circular arc from corner to corner bulging
    `depth` side lengths outward, and reaches `inset` back over the side.
    """
    corners = _document_corners(aspect)
    a, b = corners[side], corners[(side + 1) % 4]
    length = float(np.linalg.norm(b - a))
    u = (b - a) / length
    # outward normal of the clockwise (y down) outline
    n = np.array([u[1], -u[0]])
    half, sagitta = length / 2.0, depth * length
    radius = (half**2 + sagitta**2) / (2.0 * sagitta)
    centre = (a + b) / 2.0 - n * (radius - sagitta)
    span = math.asin(min(1.0, half / radius))
    t = np.linspace(-span, span, 64)
    arc = centre + radius * (np.cos(t)[:, None] * n + np.sin(t)[:, None] * u)
    return np.vstack([arc, [b - n * inset, a - n * inset]])


def synthesize_scene(spec: SceneSpec) -> tuple[RgbImage, GroundTruth]:
    """Render one scene; identical specs give byte-identical images."""
    rng = np.random.default_rng(spec.seed)
    cam = CameraIntrinsics.for_image(spec.width, spec.height, spec.focal_coeff)
    doc = _document_corners(spec.aspect)

    corners: FloatArray | None = None
    pose: _Pose | None = None
    for _ in range(MAX_ATTEMPTS):
        pose = _sample_pose(rng, spec, cam)
        corners = _project(pose, cam, doc, spec.aspect)
        if corners is not None and _acceptable(corners, spec):
            break
    else:
        raise SceneGenerationError(f"No acceptable pose after {MAX_ATTEMPTS} attempts (seed {spec.seed})")
    assert corners is not None and pose is not None

    ss = spec.supersample
    width, height = spec.width * ss, spec.height * ss
    canvas = _background(rng, spec.background, width, height, ss).astype(np.float32)

    tex_h = 400
    texture = _document_texture(rng, spec, tex_h)
    tex_w = texture.shape[1]
    tex_corners = np.array(
        [[-0.5, -0.5], [tex_w - 0.5, -0.5], [tex_w - 0.5, tex_h - 0.5], [-0.5, tex_h - 0.5]]
    )
    h = homography_from_points(tex_corners, rescale_points(corners, ss))
    doc_layer = cv2.warpPerspective(texture, h.matrix, (width, height), flags=cv2.INTER_LINEAR)
    alpha = cv2.warpPerspective(
        np.ones((tex_h, tex_w), dtype=np.float32), h.matrix, (width, height), flags=cv2.INTER_LINEAR
    )[..., None]
    canvas = canvas * (1.0 - alpha) + doc_layer * alpha

    if spec.occluded_side is not None:
        depth = float(rng.uniform(0.15, 0.25))
        region = _project(pose, cam, _cap_polygon(spec.occluded_side, spec.aspect, depth), spec.aspect)
        if region is not None:
            points = np.round(rescale_points(region, ss) * 16).astype(np.int32)
            cv2.fillPoly(canvas, [points], tuple(float(c) for c in spec.doc_color), lineType=cv2.LINE_8, shift=4)

    out = cv2.resize(np.clip(canvas, 0, 255), (spec.width, spec.height), interpolation=cv2.INTER_AREA)
    image = RgbImage(np.round(out).astype(np.uint8))
    truth = GroundTruth(
        m=Quad.from_points(corners),
        template=TemplateSpec(width=spec.aspect, height=1.0),
        image_size=(spec.width, spec.height),
    )
    return image, truth


def sample_scene_specs(
    count: int,
    seed: int,
    occlude_fraction: float = 0.25,
    backgrounds: Optional[list[BackgroundKind]] = None,
    clutter_lines: int = 0,
    **overrides: object,
) -> list[SceneSpec]:
    """
    A deterministic suite: backgrounds cycle, aspects alternate, and every
    k-th scene (k = 1 / occlude_fraction) hides one side, cycling the side.
    """
    kinds = backgrounds or list(BackgroundKind)
    every = round(1.0 / occlude_fraction) if occlude_fraction > 0 else 0
    specs: list[SceneSpec] = []
    for i in range(count):
        occluded = None
        if every and i % every == every - 1:
            occluded = (i // every) % 4
        specs.append(
            SceneSpec.model_validate(
                {
                    "aspect": SCENE_ASPECTS[(i // len(kinds)) % len(SCENE_ASPECTS)],
                    "background": kinds[i % len(kinds)],
                    "clutter_lines": clutter_lines,
                    "occluded_side": occluded,
                    "seed": seed * 1_000_003 + i,
                    **overrides,
                }
            )
        )
    return specs
