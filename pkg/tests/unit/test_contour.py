import numpy as np
import pytest

from app.internal.edges import EdgeMap, EdgeMaps
from app.internal.geometry import HomoLine, Point2, is_primarily_horizontal
from app.internal.hough import DetectedLine
from app.internal.ranking.contour import (
    BorderStats,
    ProfileBank,
    border_stats,
    build_profile,
    contour_score,
    contour_scores,
    segment_stats,
)


@pytest.fixture
def row_map() -> EdgeMap:
    values = np.zeros((12, 20))
    values[5, 3:13] = 1.0
    return EdgeMap(values, "horizontal")


def _horizontal(y: float) -> HomoLine:
    return HomoLine.through((0.0, y), (10.0, y))


def _detected(p: tuple[float, float], q: tuple[float, float]) -> DetectedLine:
    line = HomoLine.through(p, q)
    return DetectedLine(line, line.orientation, 0, 1.0, (Point2(*p), Point2(*q)))


class TestProfile:
    def test_horizontal_raster(self, row_map: EdgeMap):
        profile = build_profile(_horizontal(5.0), row_map)
        assert profile.major_axis == "x"
        assert len(profile) == 20
        assert profile.start == 0
        assert profile.prefix_values[-1] == 10.0
        assert profile.prefix_nonzero[-1] == 10

    def test_vertical_raster_clipped_to_map(self):
        values = np.zeros((12, 20))
        values[:, 7] = 2.0
        profile = build_profile(HomoLine.through((7.0, 0.0), (7.0, 5.0)), EdgeMap(values, "vertical"))
        assert profile.major_axis == "y"
        assert len(profile) == 12
        assert profile.prefix_values[-1] == 24.0

    def test_tiny_values_do_not_count_as_coverage(self):
        values = np.zeros((12, 20))
        values[5, :10] = 1e-9
        values[5, 10:14] = 1e-6
        values[5, 14:] = 0.5
        profile = build_profile(_horizontal(5.0), EdgeMap(values, "horizontal"))
        assert profile.prefix_nonzero[-1] == 6
        stats = border_stats(profile, (Point2(0, 5), Point2(19, 5)))
        assert stats.c == pytest.approx(6 / 20)

    def test_line_outside_the_map(self, row_map: EdgeMap):
        profile = build_profile(_horizontal(40.0), row_map)
        assert len(profile) == 0
        assert border_stats(profile, (Point2(0, 40), Point2(5, 40))) == BorderStats(0.0, 0.0, 0.0)

    def test_steep_line_starts_where_it_enters(self):
        # enters the map at y = 4
        line = HomoLine.through((-4.0, 0.0), (0.0, 4.0))
        profile = build_profile(line, EdgeMap(np.zeros((12, 20)), "horizontal"))
        assert profile.major_axis == "x"
        assert profile.start == 0
        assert tuple(profile.raster[0]) == (0, 4)
        assert len(profile) == 8


class TestBorderStats:
    def test_segment_inside_the_run(self, row_map: EdgeMap):
        stats = border_stats(build_profile(_horizontal(5.0), row_map), (Point2(5, 5), Point2(8, 5)))
        assert stats.w == 4.0
        assert stats.w_prime == 6.0
        assert stats.c == 1.0

    def test_endpoint_order_does_not_matter(self, row_map: EdgeMap):
        profile = build_profile(_horizontal(5.0), row_map)
        assert border_stats(profile, (Point2(8, 5), Point2(5, 5))) == border_stats(
            profile, (Point2(5, 5), Point2(8, 5))
        )

    def test_segment_leaving_the_frame(self, row_map: EdgeMap):
        stats = border_stats(build_profile(_horizontal(5.0), row_map), (Point2(-10, 5), Point2(12, 5)))
        assert stats.w == 10.0
        assert stats.w_prime == 0.0
        # only the 13 in-frame samples count
        assert stats.c == pytest.approx(10 / 13)

    def test_flank_length(self, row_map: EdgeMap):
        profile = build_profile(_horizontal(5.0), row_map)
        stats = border_stats(profile, (Point2(5, 5), Point2(8, 5)), flank=1)
        assert stats.w_prime == 2.0

    def test_huge_endpoints(self, row_map: EdgeMap):
        profile = build_profile(_horizontal(5.0), row_map)
        stats = border_stats(profile, (Point2(-1e12, 5), Point2(1e12, 5)))
        assert stats.w == 10.0
        assert stats.c == pytest.approx(0.5)


class TestContourScore:
    def test_complete_border(self):
        assert contour_score([BorderStats(10.0, 0.0, 1.0)] * 4) == pytest.approx(40.0)

    def test_half_missing_border(self):
        assert contour_score([BorderStats(10.0, 0.0, 0.5)] * 4) == pytest.approx(40.0 / 3.0)

    def test_flanks_are_subtracted(self):
        sides = [BorderStats(10.0, 1.5, 1.0)] * 3
        assert contour_score(sides) == pytest.approx(30.0 - 4.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            contour_score([])

    def test_batch_form_agrees(self):
        rng = np.random.default_rng(2)
        w = rng.uniform(0, 50, size=(6, 4))
        c = rng.uniform(0, 1, size=(6, 4))
        wp = rng.uniform(0, 5, size=(6, 4))
        batch = contour_scores(w, c, wp)
        for i in range(6):
            sides = [BorderStats(w[i, j], wp[i, j], c[i, j]) for j in range(4)]
            assert batch[i] == pytest.approx(contour_score(sides))

    def test_uncounted_side_adds_no_miss_penalty(self):
        w = [10.0, 10.0, 10.0, 0.0]
        c = [1.0, 1.0, 1.0, 0.0]
        wp = [0.0, 0.0, 0.0, 0.5]
        assert contour_scores(w, c, wp) == pytest.approx(15.0 - 0.5)
        assert contour_scores(w, c, wp, counted=[True, True, True, False]) == pytest.approx(30.0 - 0.5)


def test_profile_bank_matches_single_profiles():
    rng = np.random.default_rng(5)
    values = rng.uniform(0, 1, size=(40, 60)) * (rng.uniform(size=(40, 60)) > 0.6)
    maps = EdgeMaps(EdgeMap(values, "horizontal"), EdgeMap(values, "vertical"))
    lines = [
        _detected((0.0, 10.0), (59.0, 14.0)),
        _detected((0.0, 30.0), (59.0, 22.0)),
        _detected((12.0, 0.0), (15.0, 39.0)),
        _detected((50.0, 0.0), (41.0, 39.0)),
    ]
    bank = ProfileBank.build(lines, maps)
    idx, p0, p1 = [], [], []
    for _ in range(50):
        i = int(rng.integers(0, len(lines)))
        a, b = lines[i].endpoints
        s, t = rng.uniform(-0.5, 1.5, size=2)
        p0.append((a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)))
        p1.append((a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)))
        idx.append(i)
    w, wp, c = bank.stats(idx, p0, p1, flank=7)
    for k, i in enumerate(idx):
        single = border_stats(bank.profiles[i], (Point2(*p0[k]), Point2(*p1[k])), flank=7)
        assert w[k] == pytest.approx(single.w)
        assert wp[k] == pytest.approx(single.w_prime)
        assert c[k] == pytest.approx(single.c)


def test_segment_stats_match_fresh_profiles():
    rng = np.random.default_rng(9)
    mask = rng.uniform(size=(2, 40, 60)) > 0.5
    values = rng.uniform(0, 1, size=(2, 40, 60)) * mask
    maps = EdgeMaps(EdgeMap(values[0], "horizontal"), EdgeMap(values[1], "vertical"))
    p0 = rng.uniform((-15.0, -15.0), (75.0, 55.0), size=(200, 2))
    p1 = rng.uniform((-15.0, -15.0), (75.0, 55.0), size=(200, 2))
    w, wp, c = segment_stats(p0, p1, maps, flank=6)
    for k in range(200):
        p, q = Point2(*p0[k]), Point2(*p1[k])
        edge_map = maps.horizontal if is_primarily_horizontal(q.x - p.x, q.y - p.y) else maps.vertical
        single = border_stats(build_profile(HomoLine.through(p, q), edge_map), (p, q), flank=6)
        assert w[k] == pytest.approx(single.w)
        assert wp[k] == pytest.approx(single.w_prime)
        assert c[k] == pytest.approx(single.c)


def test_segment_stats_empty_input():
    maps = EdgeMaps(EdgeMap(np.zeros((8, 8)), "horizontal"), EdgeMap(np.zeros((8, 8)), "vertical"))
    w, wp, c = segment_stats(np.zeros((0, 2)), np.zeros((0, 2)), maps)
    assert w.shape == wp.shape == c.shape == (0,)
