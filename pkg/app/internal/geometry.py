"""
Homogeneous 2-D primitives, homographies and the central-projection
rectification of image quadrilaterals.

Coordinates are image pixels with integer values at pixel centres, x to the
right and y down. "Counterclockwise" means a positive cross product
(b - a) x (c - b) computed directly on these coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, NamedTuple, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]
Orientation = Literal["horizontal", "vertical"]

_EPS = 1e-12


class GeometryError(ValueError):
    pass


class DegenerateIntersection(GeometryError):
    pass


class DegenerateQuad(GeometryError):
    pass


class UnrectifiableQuad(GeometryError):
    pass


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, slots=True)
class HomoPoint:
    """Finite points are stored with w = 1, points at infinity with w = 0 and a unit direction."""

    x: float
    y: float
    w: float

    @classmethod
    def from_vector(cls, vector: ArrayLike) -> HomoPoint:
        v = np.asarray(vector, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm == 0.0 or not math.isfinite(norm):
            raise GeometryError("Homogeneous point must have a non-zero finite vector")
        v = v / norm
        if abs(v[2]) > _EPS:
            return cls(float(v[0] / v[2]), float(v[1] / v[2]), 1.0)
        direction = v[:2] / np.linalg.norm(v[:2])
        # a direction and its opposite are the same point at infinity
        if direction[0] < -_EPS or (abs(direction[0]) <= _EPS and direction[1] < 0):
            direction = -direction
        return cls(float(direction[0]), float(direction[1]), 0.0)

    @classmethod
    def from_point(cls, point: Point2 | Sequence[float]) -> HomoPoint:
        return cls(float(point[0]), float(point[1]), 1.0)

    @property
    def is_infinite(self) -> bool:
        return self.w == 0.0

    @property
    def vector(self) -> FloatArray:
        return np.array([self.x, self.y, self.w], dtype=np.float64)

    def to_point(self) -> Point2:
        if self.is_infinite:
            raise GeometryError("Point at infinity has no Euclidean coordinates")
        return Point2(self.x, self.y)


@dataclass(frozen=True, slots=True)
class HomoLine:
    """Line a*x + b*y + c = 0 stored with a^2 + b^2 = 1."""

    a: float
    b: float
    c: float

    @classmethod
    def from_vector(cls, vector: ArrayLike) -> HomoLine:
        v = np.asarray(vector, dtype=np.float64)
        norm = math.hypot(float(v[0]), float(v[1]))
        if norm <= _EPS or not np.all(np.isfinite(v)):
            raise GeometryError("Line has no direction: (a, b) must be non-zero")
        v = v / norm
        return cls(float(v[0]), float(v[1]), float(v[2]))

    @classmethod
    def through(cls, p: Point2 | Sequence[float], q: Point2 | Sequence[float]) -> HomoLine:
        v = np.cross([p[0], p[1], 1.0], [q[0], q[1], 1.0])
        try:
            return cls.from_vector(v)
        except GeometryError:
            raise DegenerateIntersection("Cannot draw a line through coincident points")

    @property
    def vector(self) -> FloatArray:
        return np.array([self.a, self.b, self.c], dtype=np.float64)

    def signed_distance(self, point: Point2 | Sequence[float]) -> float:
        return self.a * point[0] + self.b * point[1] + self.c

    @property
    def orientation(self) -> Orientation:
        # direction vector is (b, -a)
        return "horizontal" if is_primarily_horizontal(self.b, -self.a) else "vertical"

    def x_at(self, y: float) -> float:
        return -(self.b * y + self.c) / self.a

    def y_at(self, x: float) -> float:
        return -(self.a * x + self.c) / self.b


def is_primarily_horizontal(dx: float, dy: float) -> bool:
    """Slope dy/dx lies in (-1, 1]."""
    if dx == 0.0:
        return False
    slope = dy / dx
    return -1.0 < slope <= 1.0


def intersect_lines(l1: HomoLine, l2: HomoLine) -> HomoPoint:
    v = np.cross(l1.vector, l2.vector)
    if float(np.linalg.norm(v)) < _EPS:
        raise DegenerateIntersection("degenerate intersection")
    return HomoPoint.from_vector(v)


def polygon_area(vertices: ArrayLike) -> float:
    """Signed shoelace area, positive for counterclockwise order."""
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def turn_signs(vertices: ArrayLike) -> FloatArray:
    """Cross products at every vertex of a batch of quads, shape (..., 4)."""
    v = np.asarray(vertices, dtype=np.float64)
    e = np.roll(v, -1, axis=-2) - v
    e_next = np.roll(e, -1, axis=-2)
    return e[..., 0] * e_next[..., 1] - e[..., 1] * e_next[..., 0]


def convexity_sign(vertices: ArrayLike) -> NDArray[np.int8]:
    """+1 for convex counterclockwise, -1 for convex clockwise, 0 otherwise."""
    turns = turn_signs(vertices)
    ccw = np.all(turns > 0, axis=-1)
    cw = np.all(turns < 0, axis=-1)
    return ccw.astype(np.int8) - cw.astype(np.int8)


def is_convex_ordered(vertices: Sequence[Point2] | ArrayLike) -> bool:
    v = np.asarray(vertices, dtype=np.float64)
    if v.shape != (4, 2) or not np.all(np.isfinite(v)):
        return False
    return bool(convexity_sign(v) == 1)


def _canonical_start(v: FloatArray) -> int:
    sums = v[:, 0] + v[:, 1]
    best = 0
    for i in range(1, 4):
        if sums[i] < sums[best] - _EPS or (
            abs(sums[i] - sums[best]) <= _EPS and v[i, 1] < v[best, 1]
        ):
            best = i
    return best


def canonical_order(points: ArrayLike) -> list[int]:
    """
    Indices that reorder a convex quad (either orientation) counterclockwise,
    starting from the vertex with minimal x + y (ties: minimal y).
    """
    v = np.asarray(points, dtype=np.float64)
    if v.shape != (4, 2) or not np.all(np.isfinite(v)):
        raise DegenerateQuad("A quad needs four finite vertices")
    sign = int(convexity_sign(v))
    if sign == 0:
        raise DegenerateQuad("Vertices do not form a convex quad in the given order")
    order = [0, 1, 2, 3] if sign > 0 else [0, 3, 2, 1]
    start = _canonical_start(v[order])
    return order[start:] + order[:start]


@dataclass(frozen=True, slots=True)
class Quad:
    vertices: tuple[Point2, Point2, Point2, Point2]

    def __post_init__(self):
        if not is_convex_ordered(self.vertices):
            raise DegenerateQuad("Quad must be convex and counterclockwise")

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]] | ArrayLike) -> Quad:
        v = np.asarray(points, dtype=np.float64)
        order = canonical_order(v)
        return cls(tuple(Point2(float(v[i, 0]), float(v[i, 1])) for i in order))  # type: ignore[arg-type]

    def array(self) -> FloatArray:
        return np.array(self.vertices, dtype=np.float64)

    def rolled(self, k: int) -> Quad:
        """Cyclic renumbering: vertex k becomes vertex 0."""
        k %= 4
        return Quad(self.vertices[k:] + self.vertices[:k])  # type: ignore[arg-type]

    def sides(self) -> list[tuple[Point2, Point2]]:
        return [(self.vertices[i], self.vertices[(i + 1) % 4]) for i in range(4)]

    def side_lines(self) -> list[HomoLine]:
        return [HomoLine.through(p, q) for p, q in self.sides()]

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def contains(self, x: float, y: float) -> bool:
        """Closed point-in-quad test."""
        for (ax, ay), (bx, by) in self.sides():
            if (bx - ax) * (y - ay) - (by - ay) * (x - ax) < 0:
                return False
        return True

    def transformed(self, fn: Callable[[FloatArray], FloatArray]) -> Quad:
        return Quad.from_points(fn(self.array()))


def rescale_points(points: ArrayLike, factor: float) -> FloatArray:
    """Map pixel coordinates between two resolutions whose sizes differ by `factor`."""
    p = np.asarray(points, dtype=np.float64)
    return (p + 0.5) * factor - 0.5


@dataclass(frozen=True)
class Homography:
    matrix: FloatArray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        if abs(m[2, 2]) > _EPS:
            m = m / m[2, 2]
        if not np.all(np.isfinite(m)) or abs(float(np.linalg.det(m))) <= 1e-12:
            raise GeometryError("Homography is not invertible")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> Homography:
        return cls(np.eye(3))

    def apply(self, points: ArrayLike) -> FloatArray:
        p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        homo = np.hstack([p, np.ones((len(p), 1))]) @ self.matrix.T
        return homo[:, :2] / homo[:, 2:3]

    def __call__(self, points: FloatArray) -> FloatArray:
        return self.apply(points)

    def inverse(self) -> Homography:
        return Homography(np.linalg.inv(self.matrix))

    def __matmul__(self, other: Homography) -> Homography:
        return Homography(self.matrix @ other.matrix)


def _normalizing_transform(points: FloatArray) -> FloatArray:
    centre = points.mean(axis=0)
    spread = float(np.mean(np.linalg.norm(points - centre, axis=1)))
    s = math.sqrt(2.0) / spread if spread > _EPS else 1.0
    return np.array(
        [[s, 0.0, -s * centre[0]], [0.0, s, -s * centre[1]], [0.0, 0.0, 1.0]]
    )


def homography_from_points(src: ArrayLike, dst: ArrayLike) -> Homography:
    """Exact four-point direct linear solve (with Hartley normalisation)."""
    s = np.asarray(src, dtype=np.float64).reshape(4, 2)
    d = np.asarray(dst, dtype=np.float64).reshape(4, 2)
    if abs(polygon_area(s)) < 1.0 or abs(polygon_area(d)) < 1e-12:
        raise DegenerateQuad("Quad is too small to define a homography")
    ts, td = _normalizing_transform(s), _normalizing_transform(d)
    sn = np.hstack([s, np.ones((4, 1))]) @ ts.T
    dn = np.hstack([d, np.ones((4, 1))]) @ td.T
    rows: list[list[float]] = []
    for (x, y, _), (u, v, _) in zip(sn, dn):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, _, vt = np.linalg.svd(np.asarray(rows))
    h = vt[-1].reshape(3, 3)
    return Homography(np.linalg.inv(td) @ h @ ts)


def homography_from_quad(src: Quad, dst: Quad) -> Homography:
    return homography_from_points(src.array(), dst.array())


@dataclass(frozen=True, slots=True)
class CameraIntrinsics:
    focal_px: float
    principal: Point2

    def __post_init__(self):
        if not self.focal_px > 0:
            raise GeometryError("Focal length must be positive")

    @classmethod
    def for_image(cls, width: int, height: int, focal_coeff: float) -> CameraIntrinsics:
        """Principal point in the centre, focal length a fraction of the diagonal."""
        return cls(
            focal_px=focal_coeff * math.hypot(width, height),
            principal=Point2((width - 1) / 2.0, (height - 1) / 2.0),
        )

    @property
    def matrix(self) -> FloatArray:
        f, (cx, cy) = self.focal_px, self.principal
        return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])

    def rays(self, points: ArrayLike) -> FloatArray:
        """Viewing directions (x - cx, y - cy, f) of image points, shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        cx, cy = self.principal
        return np.stack(
            [p[..., 0] - cx, p[..., 1] - cy, np.full(p.shape[:-1], self.focal_px)],
            axis=-1,
        )

    def directions(self, homogeneous: ArrayLike) -> FloatArray:
        """3-D directions of homogeneous image points; points at infinity map to z = 0."""
        h = np.asarray(homogeneous, dtype=np.float64)
        cx, cy = self.principal
        w = h[..., 2]
        return np.stack(
            [h[..., 0] - cx * w, h[..., 1] - cy * w, self.focal_px * w], axis=-1
        )

    def plane_normal(self, line: ArrayLike) -> FloatArray:
        """Normal of the plane through the camera centre that projects onto `line`."""
        return np.asarray(line, dtype=np.float64) @ self.matrix

    def project(self, points3d: ArrayLike) -> FloatArray:
        x = np.asarray(points3d, dtype=np.float64)
        cx, cy = self.principal
        z = x[..., 2]
        return np.stack(
            [self.focal_px * x[..., 0] / z + cx, self.focal_px * x[..., 1] / z + cy],
            axis=-1,
        )


@dataclass(frozen=True, slots=True)
class Parallelogram:
    vertices: tuple[Point2, Point2, Point2, Point2]
    aspect: float
    """Horizontal-family side length over vertical-family side length."""
    corner_angle: float
    """Degrees."""


def horizontal_first(vertices: ArrayLike) -> NDArray[np.bool_]:
    """Whether sides 0 and 2 (rather than 1 and 3) are the primarily horizontal pair."""
    v = np.asarray(vertices, dtype=np.float64)
    e = np.roll(v, -1, axis=-2) - v
    score = np.abs(e[..., 0]) - np.abs(e[..., 1])
    return (score[..., 0] + score[..., 2]) >= (score[..., 1] + score[..., 3])


@dataclass(frozen=True)
class RectifiedBatch:
    aspect: FloatArray
    corner_angle: FloatArray
    valid: NDArray[np.bool_]
    vertices: FloatArray


def rectify_batch(vertices: ArrayLike, cam: CameraIntrinsics) -> RectifiedBatch:
    """
    Inverse images of a batch of quads (shape (T, 4, 2)) whose sides 0 and 2
    form the first (horizontal) family.

    Each quad is projected from the camera centre onto a plane parallel to
    both vanishing directions at unit distance from the centre. Aspect and
    angle do not depend on that distance.
    """
    v = np.asarray(vertices, dtype=np.float64).reshape(-1, 4, 2)
    d = cam.rays(v)
    # normals of the planes through the centre and each side
    side_normals = np.cross(d, np.roll(d, -1, axis=1))
    dir1 = np.cross(side_normals[:, 0], side_normals[:, 2])
    dir2 = np.cross(side_normals[:, 1], side_normals[:, 3])
    n1 = np.linalg.norm(dir1, axis=1)
    n2 = np.linalg.norm(dir2, axis=1)
    ok = (n1 > _EPS) & (n2 > _EPS)
    dir1 = dir1 / np.where(ok, n1, 1.0)[:, None]
    dir2 = dir2 / np.where(ok, n2, 1.0)[:, None]
    normal = np.cross(dir1, dir2)
    nn = np.linalg.norm(normal, axis=1)
    ok &= nn > 1e-9
    normal = normal / np.where(ok, nn, 1.0)[:, None]

    dots = np.einsum("tij,tj->ti", d, normal)
    dots = dots * np.sign(dots[:, :1] + (dots[:, :1] == 0))
    scale = np.linalg.norm(d, axis=2)
    ok &= np.all(dots > 1e-9 * scale, axis=1)
    safe = np.where(dots > 0, dots, 1.0)
    on_plane = d / safe[..., None]

    e1 = on_plane[:, 1] - on_plane[:, 0]
    e3 = on_plane[:, 3] - on_plane[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    l3 = np.linalg.norm(e3, axis=1)
    ok &= (l1 > _EPS) & (l3 > _EPS)
    l1s, l3s = np.where(ok, l1, 1.0), np.where(ok, l3, 1.0)
    aspect = np.where(ok, l1s / l3s, np.nan)
    cos_angle = np.clip(np.einsum("ti,ti->t", e1, e3) / (l1s * l3s), -1.0, 1.0)
    angle = np.where(ok, np.degrees(np.arccos(cos_angle)), np.nan)

    u = e1 / l1s[:, None]
    w = np.cross(normal, u)
    rel = on_plane - on_plane[:, :1]
    flat = np.stack(
        [np.einsum("tij,tj->ti", rel, u), np.einsum("tij,tj->ti", rel, w)], axis=-1
    )
    return RectifiedBatch(aspect=aspect, corner_angle=angle, valid=ok, vertices=flat)


def vanishing_points(q: Quad, cam: CameraIntrinsics) -> tuple[HomoPoint, HomoPoint]:
    """Horizontal-family vanishing point first, vertical-family second."""
    lines = [line.vector for line in q.side_lines()]
    first, second = (0, 2), (1, 3)
    if not horizontal_first(q.array()):
        first, second = second, first
    return (
        HomoPoint.from_vector(np.cross(lines[first[0]], lines[first[1]])),
        HomoPoint.from_vector(np.cross(lines[second[0]], lines[second[1]])),
    )


def rectify_to_parallelogram(q: Quad, cam: CameraIntrinsics) -> Parallelogram:
    v = q.array()
    if not horizontal_first(v):
        v = np.roll(v, -1, axis=0)
    batch = rectify_batch(v[None], cam)
    if not batch.valid[0]:
        raise UnrectifiableQuad("unrectifiable")
    flat = batch.vertices[0]
    return Parallelogram(
        vertices=tuple(Point2(float(x), float(y)) for x, y in flat),  # type: ignore[arg-type]
        aspect=float(batch.aspect[0]),
        corner_angle=float(batch.corner_angle[0]),
    )
