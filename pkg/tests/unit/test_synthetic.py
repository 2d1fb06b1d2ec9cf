import numpy as np
import pydantic
import pytest

from app.internal.geometry import CameraIntrinsics
from app.internal.harness.synthetic import (
    SCENE_ASPECTS,
    SceneGenerationError,
    SceneSpec,
    sample_scene_specs,
    synthesize_scene,
)
from app.internal.metrics import GroundTruth
from app.internal.models import BackgroundKind
from app.internal.ranking.candidates import passes_projective_filter


def test_same_spec_same_pixels():
    spec = SceneSpec(seed=5, background=BackgroundKind.stripes, clutter_lines=3)
    a, truth_a = synthesize_scene(spec)
    b, truth_b = synthesize_scene(spec)
    assert np.array_equal(a.pixels, b.pixels)
    assert truth_a.m == truth_b.m


def test_different_seeds_differ():
    a, _ = synthesize_scene(SceneSpec(seed=1))
    b, _ = synthesize_scene(SceneSpec(seed=2))
    assert not np.array_equal(a.pixels, b.pixels)


@pytest.mark.parametrize("background", list(BackgroundKind))
def test_ground_truth_is_a_projected_rectangle(background: BackgroundKind):
    spec = SceneSpec(seed=21, background=background, aspect=1.5858)
    image, truth = synthesize_scene(spec)
    assert (image.width, image.height) == (480, 640)
    assert truth.image_size == (480, 640)
    assert truth.template.aspect == pytest.approx(1.5858)
    cam = CameraIntrinsics.for_image(480, 640, spec.focal_coeff)
    assert passes_projective_filter(truth.m, cam, 1.5858)


def test_document_is_brighter_than_background():
    image, truth = synthesize_scene(SceneSpec(seed=8))
    centre = truth.m.array().mean(axis=0)
    x, y = int(round(centre[0])), int(round(centre[1]))
    # the document is near white, flat backgrounds stay at or below 150
    assert image.pixels[y, x].min() >= 200
    assert image.pixels[0, 0].max() <= 150 or image.pixels[-1, -1].max() <= 150


def _outside_side_midpoints(truth: GroundTruth, offset: float) -> list[tuple[int, int]]:
    vertices = truth.m.array()
    centre = vertices.mean(axis=0)
    points = []
    for i in range(4):
        mid = (vertices[i] + vertices[(i + 1) % 4]) / 2.0
        direction = (mid - centre) / np.linalg.norm(mid - centre)
        x, y = np.round(mid + offset * direction).astype(int)
        points.append((int(x), int(y)))
    return points


def test_hidden_side_merges_into_a_document_coloured_cap():
    clean, truth = synthesize_scene(SceneSpec(seed=12))
    occluded, truth_occluded = synthesize_scene(SceneSpec(seed=12, occluded_side=0))
    assert truth.m == truth_occluded.m
    centre = truth.m.array().mean(axis=0)
    x, y = int(round(centre[0])), int(round(centre[1]))
    assert np.array_equal(clean.pixels[y, x], occluded.pixels[y, x])

    outside = _outside_side_midpoints(truth, offset=6.0)
    assert all(clean.pixels[y, x].max() <= 150 for x, y in outside)
    capped = [(x, y) for x, y in outside if occluded.pixels[y, x].min() >= 200]
    assert len(capped) == 1
    x, y = capped[0]
    assert np.array_equal(occluded.pixels[y, x], np.array([240, 238, 230], dtype=np.uint8))


@pytest.mark.parametrize(
    "field, value",
    [("max_rotation_deg", 61.0), ("occluded_side", 4), ("width", 32), ("aspect", 0.0), ("supersample", 0)],
)
def test_spec_validation(field: str, value: object):
    with pytest.raises(pydantic.ValidationError):
        SceneSpec.model_validate({field: value})


def test_impossible_scene_raises():
    # a document five times larger than the frame never keeps three corners inside
    with pytest.raises(SceneGenerationError):
        synthesize_scene(SceneSpec(seed=3, fill_range=(5.0, 5.0), max_offset=0.0))


class TestSceneSuite:
    def test_cycles_backgrounds_aspects_and_occlusion(self):
        specs = sample_scene_specs(8, seed=3)
        kinds = list(BackgroundKind)
        assert [s.background for s in specs] == kinds + kinds
        assert [s.aspect for s in specs] == [SCENE_ASPECTS[0]] * 4 + [SCENE_ASPECTS[1]] * 4
        assert [s.occluded_side for s in specs] == [None, None, None, 0, None, None, None, 1]
        assert len({s.seed for s in specs}) == 8

    def test_deterministic_and_seeded(self):
        assert sample_scene_specs(4, seed=1) == sample_scene_specs(4, seed=1)
        assert sample_scene_specs(4, seed=1) != sample_scene_specs(4, seed=2)

    def test_no_occlusion_and_overrides(self):
        specs = sample_scene_specs(6, seed=0, occlude_fraction=0.0, clutter_lines=2, width=320, height=240)
        assert all(s.occluded_side is None for s in specs)
        assert all(s.clutter_lines == 2 and (s.width, s.height) == (320, 240) for s in specs)

    def test_background_subset(self):
        specs = sample_scene_specs(3, seed=0, backgrounds=[BackgroundKind.noise])
        assert {s.background for s in specs} == {BackgroundKind.noise}
