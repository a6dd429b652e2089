import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from egmrank.sigmamap import (Sigma2Map, pgm_levels, read_map_csv, render_pgm, sigma2_map,
                              subset_profile, window_channels, write_map_csv)
from egmrank.spectral import BeatWindow, full_window, magnitude_matrix
from egmrank.svdcore import svd_profile

from conftest import simulate_fixture


def beat_of(x, rate=1000.0):
    return BeatWindow(x, (x.shape[1] * 1000.0 / rate, 0.0), 0, rate)


def random_beat(rows, cols, width=64, seed=0):
    return beat_of(np.random.default_rng(seed).normal(size=(rows * cols, width)))


@pytest.mark.parametrize("rows,cols", [(3, 3), (4, 5), (5, 5), (3, 8)])
def test_identical_channels_give_zero_map(rows, cols):
    trace = np.random.default_rng(rows * cols).normal(size=80)
    m = sigma2_map(beat_of(np.tile(trace, (rows * cols, 1))), (rows, cols))
    assert m.shape == (rows - 2, cols - 2)
    assert m.values.max() < 1e-9


def test_pixel_equals_direct_subset_computation():
    beat = random_beat(4, 5, seed=1)
    m = sigma2_map(beat, (4, 5))
    b = magnitude_matrix(beat).values
    for i in range(2):
        for j in range(3):
            idx = [(i + a) * 5 + j + c for a in range(3) for c in range(3)]
            assert m.values[i, j] == pytest.approx(svd_profile(b[idx]).sigma2, abs=1e-15)


def test_window_channels_row_major():
    assert window_channels((4, 5), 1, 2) == [7, 8, 9, 12, 13, 14, 17, 18, 19]


def test_layout_mismatch_and_small_layout():
    with pytest.raises(ValueError):
        sigma2_map(random_beat(3, 3), (3, 4))
    with pytest.raises(ValueError):
        sigma2_map(random_beat(2, 5), (2, 5))


def test_window_and_stride_parameters():
    beat = random_beat(6, 6, seed=2)
    assert sigma2_map(beat, (6, 6), window=4).shape == (3, 3)
    assert sigma2_map(beat, (6, 6), stride=2).shape == (2, 2)


@settings(max_examples=20, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2 ** 31))
def test_invariant_to_global_scaling(scale, seed):
    beat = random_beat(4, 4, seed=seed % 1000)
    a = sigma2_map(beat, (4, 4)).values
    b = sigma2_map(beat_of(scale * beat.samples), (4, 4)).values
    np.testing.assert_allclose(a, b, atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 63), min_size=16, max_size=16), st.integers(0, 1000))
def test_invariant_to_per_channel_circular_shifts(shifts, seed):
    beat = random_beat(4, 4, seed=seed)
    shifted = np.array([np.roll(row, s) for row, s in zip(beat.samples, shifts)])
    a = sigma2_map(beat, (4, 4)).values
    b = sigma2_map(beat_of(shifted), (4, 4)).values
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_pixels_depend_only_on_their_window():
    beat = random_beat(5, 6, seed=3)
    base = sigma2_map(beat, (5, 6)).values
    x = beat.samples.copy()
    x[2 * 6 + 4] = np.random.default_rng(9).normal(size=x.shape[1])  # electrode (2, 4)
    changed = sigma2_map(beat_of(x), (5, 6)).values != base
    expect = np.zeros_like(changed)
    for i in range(3):
        for j in range(4):
            expect[i, j] = i <= 2 <= i + 2 and j <= 4 <= j + 2
    np.testing.assert_array_equal(changed, expect)


def test_map_value_range_enforced():
    with pytest.raises(ValueError):
        Sigma2Map(np.array([[1.5]]), (3, 3))


def test_flat_front_map_below_threshold():
    sim = simulate_fixture("far_corner")
    m = sigma2_map(full_window(sim.recording), (10, 10))
    assert m.values.max() < 0.05


# --- subset profiles -------------------------------------------------------


def test_subset_all_channels_equals_whole_profile():
    beat = random_beat(3, 3, seed=4)
    whole = svd_profile(magnitude_matrix(beat))
    np.testing.assert_allclose(subset_profile(beat, range(9)).sigmas, whole.sigmas)


def test_singleton_subset():
    p = subset_profile(random_beat(3, 3), [4])
    np.testing.assert_array_equal(p.normalized, [1.0])


def test_subset_validation():
    beat = random_beat(3, 3)
    with pytest.raises(IndexError):
        subset_profile(beat, [0, 9])
    with pytest.raises(ValueError):
        subset_profile(beat, [1, 1])
    with pytest.raises(ValueError):
        subset_profile(beat, [])


def test_boundary_spanning_subset_has_larger_sigma2():
    sim = simulate_fixture("two_wavefronts")
    beat = full_window(sim.recording)
    # the morphology boundary runs between array columns 4 and 5
    spanning = [6 * 10 + c for c in range(2, 7)]
    one_side = [r * 10 + 1 for r in range(3, 8)]
    assert subset_profile(beat, spanning).sigma2 > subset_profile(beat, one_side).sigma2


# --- output ------------------------------------------------------------------


def test_pgm_levels_clamp():
    np.testing.assert_array_equal(pgm_levels(np.array([0.0, 0.05, 0.125, 0.25, 0.9])),
                                  [0, 51, 128, 255, 255])


def test_render_pgm_format(tmp_path):
    p = tmp_path / "m.pgm"
    render_pgm(np.array([[0.0, 0.25], [0.1, 0.3], [0.2, 0.01]]), p)
    lines = p.read_text().splitlines()
    assert lines[:3] == ["P2", "2 3", "255"]
    assert lines[3:] == ["0 255", "102 255", "204 10"]


def test_map_csv_round_trip(tmp_path):
    m = sigma2_map(random_beat(4, 5, seed=5), (4, 5))
    p = tmp_path / "m.csv"
    write_map_csv(m, p)
    assert p.read_text().splitlines()[0] == "row,col,center_row,center_col,sigma2"
    np.testing.assert_array_equal(read_map_csv(p), m.values)


def test_read_map_csv_rejects_garbage(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        read_map_csv(p)
