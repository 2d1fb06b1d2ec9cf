import numpy as np
import pytest

from app.internal.edges import EdgeMap, compute_edge_maps
from app.internal.env_settings import HoughSettings
from app.internal.hough import (
    FAMILY_ORDER,
    BandGeometry,
    HoughImage,
    dyadic_pattern,
    detect_lines,
    fht,
    inverse_peak,
    next_power_of_two,
    select_peaks,
    split_bands,
)


def _brute_force(values: np.ndarray, hough: HoughImage) -> np.ndarray:
    """Sum the band along every accumulator cell's line, read back through `line_params`."""
    rows, cols = values.shape
    n = hough.pattern_length
    t = np.arange(n)
    out = np.zeros_like(hough.accumulator)
    for r in range(out.shape[0]):
        for c in range(out.shape[1]):
            intercept, shift = hough.line_params(r, c)
            along = intercept + np.sign(shift) * np.asarray(dyadic_pattern(n, abs(shift)))
            if hough.orientation == "vertical":
                ok = (t < rows) & (along >= 0) & (along < cols)
                out[r, c] = values[t[ok], along[ok]].sum()
            else:
                ok = (t < cols) & (along >= 0) & (along < rows)
                out[r, c] = values[along[ok], t[ok]].sum()
    return out


class TestDyadicPattern:
    @pytest.mark.parametrize("length", [1, 2, 8, 32])
    def test_shape(self, length: int):
        for shift in range(length):
            p = dyadic_pattern(length, shift)
            assert len(p) == length
            assert p[0] == 0
            assert p[-1] == shift
            steps = np.diff(p)
            assert set(steps.tolist()) <= {0, 1}

    def test_known_pattern(self):
        assert dyadic_pattern(8, 3) == [0, 0, 1, 1, 2, 2, 3, 3]

    def test_invalid(self):
        with pytest.raises(ValueError):
            dyadic_pattern(6, 1)
        with pytest.raises(ValueError):
            dyadic_pattern(8, 8)
        with pytest.raises(ValueError):
            dyadic_pattern(8, -1)


def test_next_power_of_two():
    assert [next_power_of_two(n) for n in (1, 2, 3, 8, 9, 240)] == [1, 2, 4, 8, 16, 256]


def _random_band(seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    rows, cols = rng.integers(5, 21, size=2)
    return rng.integers(0, 4, size=(rows, cols)).astype(np.float64)


@pytest.mark.parametrize("seed", range(20))
def test_fht_matches_brute_force(seed: int):
    values = _random_band(seed)
    for family in FAMILY_ORDER:
        hough = fht(values, family)
        np.testing.assert_allclose(hough.accumulator, _brute_force(values, hough))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(20, 120))
def test_fht_matches_brute_force_extended(seed: int):
    values = _random_band(seed)
    for family in FAMILY_ORDER:
        hough = fht(values, family)
        np.testing.assert_allclose(hough.accumulator, _brute_force(values, hough))


@pytest.mark.parametrize("family", FAMILY_ORDER)
def test_partial_transform_is_leading_rows(family):
    values = _random_band(3)
    full = fht(values, family)
    partial = fht(values, family, max_shift=3)
    offset = full.pad - partial.pad
    np.testing.assert_allclose(partial.accumulator, full.accumulator[:4, offset:])


def test_fht_rejects_empty():
    with pytest.raises(ValueError):
        fht(np.zeros((0, 4)), "vert+")


def test_cell_inverts_line_params():
    hough = fht(_random_band(5), "horz-")
    for r in range(hough.accumulator.shape[0]):
        for c in range(hough.accumulator.shape[1]):
            assert hough.cell(*hough.line_params(r, c)) == (r, c)


def test_full_diagonal_belongs_to_one_family():
    values = np.ones((8, 8))
    assert not fht(values, "vert+").selectable()[-1].any()
    assert not fht(values, "horz-").selectable()[-1].any()
    assert fht(values, "vert-").selectable().all()
    assert fht(values, "horz+").selectable().all()


def test_single_line_round_trip():
    values = np.zeros((32, 40))
    pattern = dyadic_pattern(32, 5)
    for t, offset in enumerate(pattern):
        values[t, 7 + offset] = 1.0
    band = BandGeometry(10, 20, 40, 32)
    hough = fht(values, "vert+", band)
    peaks = select_peaks([hough], 1, 0.5, 1.0, hough.selectable_max())
    assert len(peaks) == 1
    peak = peaks[0]
    assert (peak.intercept, peak.shift, peak.value) == (7, 5, 32.0)

    line = inverse_peak(peak, hough)
    assert line.orientation == "vertical"
    assert line.endpoints == ((17.0, 20.0), (22.0, 51.0))


def test_select_peaks_separation_and_threshold():
    values = np.zeros((16, 30))
    values[:, 5] = 1.0
    values[:, 7] = 0.9
    values[:, 20] = 0.1
    hough = fht(values, "vert+")
    peaks = select_peaks([hough], 5, 0.2, 3.0, hough.selectable_max())
    assert (peaks[0].intercept, peaks[0].shift, peaks[0].value) == (5, 0, 16.0)
    # column 7 is too close to column 5, column 20 is under the threshold
    assert all((p.intercept, p.shift) not in ((7, 0), (20, 0)) for p in peaks)
    assert all(p.value >= 0.2 * 16.0 for p in peaks)
    for i, p in enumerate(peaks):
        for q in peaks[i + 1 :]:
            assert np.hypot(p.intercept - q.intercept, p.shift - q.shift) > 3.0
    assert [p.value for p in peaks] == sorted((p.value for p in peaks), reverse=True)
    assert select_peaks([hough], 0, 0.2, 3.0, 1.0) == []


@pytest.mark.parametrize(("second", "kept"), [(15, False), (16, True)])
def test_select_peaks_rejects_at_exactly_min_sep(second: int, kept: bool):
    values = np.zeros((16, 30))
    values[:, 5] = 1.0
    values[:, second] = 0.9
    hough = fht(values, "vert+")
    peaks = select_peaks([hough], 5, 0.5, 10.0, hough.selectable_max())
    assert [(p.intercept, p.shift) for p in peaks] == ([(5, 0), (second, 0)] if kept else [(5, 0)])


def _draw_line(shape: tuple[int, int], vertical: bool, intercept: int, shift: int) -> np.ndarray:
    values = np.zeros(shape)
    n = shape[0] if vertical else shape[1]
    along = intercept + int(np.sign(shift)) * np.asarray(dyadic_pattern(n, abs(shift)))
    t = np.arange(n)
    if vertical:
        values[t, along] = 1.0
    else:
        values[along, t] = 1.0
    return values


def test_peaks_invert_to_the_drawn_line():
    rng = np.random.default_rng(31)
    n, cross = 32, 48
    for _ in range(500):
        family = FAMILY_ORDER[int(rng.integers(0, 4))]
        vertical = family.startswith("vert")
        if family.endswith("+"):
            shift = int(rng.integers(0, n - 1))
            intercept = int(rng.integers(0, cross - shift))
        else:
            shift = -int(rng.integers(1, n - 1))
            intercept = int(rng.integers(-shift, cross))
        shape = (n, cross) if vertical else (cross, n)
        values = _draw_line(shape, vertical, intercept, shift)
        x0, y0 = (int(v) for v in rng.integers(0, 200, size=2))
        hough = fht(values, family, BandGeometry(x0, y0, shape[1], shape[0]))
        peaks = select_peaks([hough], 1, 0.5, 1.0, hough.selectable_max())
        assert len(peaks) == 1
        peak = peaks[0]
        assert (peak.intercept, peak.shift, peak.value) == (intercept, shift, float(n))

        line = inverse_peak(peak, hough)
        if vertical:
            expected = ((x0 + intercept, y0), (x0 + intercept + shift, y0 + n - 1))
        else:
            expected = ((x0, y0 + intercept), (x0 + n - 1, y0 + intercept + shift))
        assert line.endpoints == expected

        (ax, ay), (bx, by) = line.endpoints
        if vertical:
            redrawn = _draw_line(shape, True, int(ax) - x0, int(bx - ax))
        else:
            redrawn = _draw_line(shape, False, int(ay) - y0, int(by - ay))
        again = fht(redrawn, family)
        row, column = np.unravel_index(np.argmax(again.accumulator), again.accumulator.shape)
        assert (int(row), int(column)) == (peak.row, peak.column)

def test_split_bands_remainder_goes_last():
    bands = split_bands(240, 320, 3, "y")
    assert [(b.y0, b.height) for b in bands] == [(0, 106), (106, 106), (212, 108)]
    assert all(b.width == 240 and b.x0 == 0 for b in bands)
    assert [b.index for b in bands] == [0, 1, 2]


def test_detect_lines_rejects_mismatched_maps():
    with pytest.raises(ValueError):
        detect_lines(EdgeMap(np.zeros((10, 10)), "horizontal"), EdgeMap(np.zeros((10, 12)), "vertical"))


def test_detect_lines_on_rectangle(rectangle_image):
    maps = compute_edge_maps(rectangle_image())
    horizontal, vertical = detect_lines(maps.horizontal, maps.vertical, HoughSettings())
    assert all(line.orientation == "horizontal" for line in horizontal)
    assert all(line.orientation == "vertical" for line in vertical)

    ys = [line.line.y_at(120.0) for line in horizontal]
    xs = [line.line.x_at(160.0) for line in vertical]
    for expected in (80.0, 240.0):
        assert min(abs(y - expected) for y in ys) <= 1.0
    for expected in (60.0, 180.0):
        assert min(abs(x - expected) for x in xs) <= 1.0
    # the portrait image splits the vertical map into three bands
    assert {line.band_index for line in vertical} == {0, 1, 2}
