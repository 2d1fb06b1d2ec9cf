import numpy as np
import pytest

from conftest import _project_rectangle

from app.internal.geometry import CameraIntrinsics, HomoLine, Quad
from app.internal.ranking.reconstruct import in_frame_count, reconstruct_batch, reconstruct_fourth_side

ASPECTS = (1.586, 210 / 297, 0.63)


def _sides(corners: np.ndarray) -> list[HomoLine]:
    return [HomoLine.through(corners[i], corners[(i + 1) % 4]) for i in range(4)]


def _closest(quads: list[Quad], truth: Quad) -> float:
    return min(float(np.abs(q.array() - truth.array()).max()) for q in quads)


def _random_poses(count: int, seed: int):
    rng = np.random.default_rng(seed)
    for i in range(count):
        aspect = ASPECTS[i % len(ASPECTS)]
        rotvec = rng.uniform(-0.35, 0.35, size=3)
        depth = rng.uniform(2.5, 4.0)
        offset = tuple(rng.uniform(-0.3, 0.3, size=2))
        yield aspect, rotvec, depth, offset


def _check_poses(camera: CameraIntrinsics, count: int, seed: int) -> None:
    for aspect, rotvec, depth, offset in _random_poses(count, seed):
        corners = _project_rectangle(camera, aspect, rotvec, depth, offset)
        truth = Quad.from_points(corners)
        sides = _sides(corners)
        for dropped in range(4):
            pair = (sides[(dropped + 1) % 4], sides[(dropped + 3) % 4])
            third = sides[(dropped + 2) % 4]
            quads = reconstruct_fourth_side(pair, third, aspect, camera)
            assert quads, f"nothing reconstructed for side {dropped}"
            assert _closest(quads, truth) < 1e-6


def test_recovers_dropped_side(camera: CameraIntrinsics):
    _check_poses(camera, 30, seed=1)


@pytest.mark.slow
def test_recovers_dropped_side_many_poses(camera: CameraIntrinsics):
    _check_poses(camera, 1000, seed=2)


def test_either_aspect_orientation_is_accepted(camera: CameraIntrinsics):
    corners = _project_rectangle(camera, 1.586, (0.1, -0.2, 0.05))
    truth = Quad.from_points(corners)
    sides = _sides(corners)
    quads = reconstruct_fourth_side((sides[0], sides[2]), sides[3], 1 / 1.586, camera)
    assert _closest(quads, truth) < 1e-6


def test_square_tries_one_ratio(camera: CameraIntrinsics):
    corners = _project_rectangle(camera, 1.0, (0.2, 0.1, 0.0))
    sides = _sides(corners)
    quads = reconstruct_fourth_side((sides[0], sides[2]), sides[3], 1.0, camera)
    assert 1 <= len(quads) <= 2


@pytest.mark.parametrize("r", [0.0, -1.5])
def test_invalid_aspect(camera: CameraIntrinsics, r: float):
    sides = _sides(_project_rectangle(camera, 1.5))
    with pytest.raises(ValueError):
        reconstruct_fourth_side((sides[0], sides[2]), sides[3], r, camera)


def test_batch_marks_restored_side_and_invalid_rows(camera: CameraIntrinsics):
    corners = _project_rectangle(camera, 1.5)
    sides = [s.vector for s in _sides(corners)]
    batch = reconstruct_batch(
        [sides[0], sides[0]],
        [sides[2], sides[0]],
        [sides[3], sides[3]],
        [1.5, 1.5],
        [1.0, 1.0],
        "horizontal",
        camera,
    )
    assert batch.restored_side == 1
    assert batch.vertices.shape == (2, 4, 2)
    # a pair made of one line twice has no vanishing direction
    assert batch.valid.tolist() == [True, False]
    np.testing.assert_allclose(batch.vertices[1], 0.0)


def test_in_frame_count():
    vertices = np.array([[-0.5, -0.5], [99.5, 49.5], [-26.0, 10.0], [124.5, 62.0]])
    assert int(in_frame_count(vertices, 100, 50, 0.0)) == 2
    assert int(in_frame_count(vertices, 100, 50, 0.25)) == 3
