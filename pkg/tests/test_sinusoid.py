import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wganc.sinusoid import (DEFAULT_GRID, EvalReport, SampleFileError, SineRanges, make_dataset,
                            nearest_distances, nearest_sine_error, read_samples, relative_improvement,
                            sine_grid, sine_waves, summarize, write_report, write_samples)
from oracles import brute_nearest

# higher frequencies than the default, so grid effects show up at small resolutions
SMALL = SineRanges((0.5, 1.5), (math.pi / 16, math.pi / 4), (0.0, 2 * math.pi))


def test_formula_example():
    np.testing.assert_array_equal(sine_waves(1.0, 1.0, 0.0, 4)[0],
                                  [0.0, math.sin(1), math.sin(2), math.sin(3)])


def test_zero_amplitude_range_gives_zero_waves():
    ds = make_dataset(20, 16, SineRanges((0.0, 0.0), (0.1, 0.2), (0.0, 1.0)), seed=0)
    assert np.all(ds.waves == 0.0)


def test_dataset_rows_equal_their_formula():
    ds = make_dataset(50, 64, SMALL, seed=3)
    a, w, b = ds.params.T
    for i in range(50):
        expected = a[i] * np.sin(w[i] * np.arange(64) + b[i])
        np.testing.assert_array_equal(ds.waves[i], expected)


def test_dataset_is_deterministic_and_bounded():
    a = make_dataset(200, 64, SMALL, seed=1234)
    b = make_dataset(200, 64, SMALL, seed=1234)
    assert a.waves.tobytes() == b.waves.tobytes()
    assert not np.array_equal(a.waves, make_dataset(200, 64, SMALL, seed=1).waves)
    assert np.all(np.abs(a.waves) <= SMALL.max_amplitude)
    p = a.params
    assert np.all((p[:, 0] >= 0.5) & (p[:, 0] <= 1.5))
    assert np.all((p[:, 2] >= 0) & (p[:, 2] < 2 * math.pi))


def test_empty_range_rejected():
    with pytest.raises(ValueError):
        SineRanges((1.5, 0.5))
    with pytest.raises(ValueError):
        make_dataset(0, 64)


def test_grid_axes_and_nesting():
    grid, waves = sine_grid(SMALL, 5, 8)
    assert grid.shape == (5 * 5 * 4, 3) and waves.shape == (100, 8)
    fine, _ = sine_grid(SMALL, 9, 8)
    coarse_pts = {tuple(r) for r in grid}
    fine_pts = {tuple(r) for r in fine}
    assert coarse_pts <= fine_pts
    with pytest.raises(ValueError):
        sine_grid(SMALL, 1, 8)


def test_on_grid_sample_scores_zero():
    grid, waves = sine_grid(SMALL, 7, 64)
    rng = np.random.default_rng(0)
    picks = waves[rng.integers(0, len(waves), 20)]
    rep = nearest_sine_error(picks, SMALL, 7)
    assert rep.mean == 0.0 and rep.stderr == 0.0 and rep.n == 20


def test_off_grid_sample_scores_positive():
    off = sine_waves(1.0, 0.3, 0.123, 64)
    assert nearest_sine_error(off, SMALL, 7).mean > 1e-12


def test_zero_sample_matches_brute_force_and_smallest_amplitude():
    ranges = SineRanges((0.9, 1.1), SMALL.frequency, SMALL.phase)
    n, T = 6, 32
    zero = np.zeros((1, T))
    rep = nearest_sine_error(zero, ranges, n)
    grid, _ = sine_grid(ranges, n, T)
    amps, freqs, phases = (np.unique(grid[:, k]) for k in range(3))
    assert rep.mean == pytest.approx(brute_nearest(zero[0], amps, freqs, phases), rel=1e-12)
    # distance scales with amplitude, so the smallest amplitude wins
    unit = min(np.linalg.norm(np.sin(w * np.arange(T) + b)) for w in freqs for b in phases)
    assert rep.mean == pytest.approx(0.9 * unit, rel=1e-12)
    # refined grid (2n - 1) contains the coarse one: never larger
    assert nearest_sine_error(zero, ranges, 2 * n - 1).mean <= rep.mean


def test_nearest_matches_brute_force_on_random_samples():
    rng = np.random.default_rng(1)
    T, n = 16, 5
    grid, _ = sine_grid(SMALL, n, T)
    amps, freqs, phases = (np.unique(grid[:, k]) for k in range(3))
    samples = np.concatenate([rng.uniform(-1.5, 1.5, size=(6, T)),
                              sine_waves([0.2, 3.0, 0.77], [0.3, 0.5, 0.01], [1.0, 2.0, 3.0], T)])
    got = nearest_distances(samples, SMALL, n)
    for s, d in zip(samples, got):
        assert d == pytest.approx(brute_nearest(s, amps, freqs, phases), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(0, 2 ** 31 - 1))
def test_refinement_never_increases_distance(n, seed):
    samples = np.random.default_rng(seed).uniform(-1.5, 1.5, size=(4, 16))
    assert np.all(nearest_distances(samples, SMALL, 2 * n - 1) <= nearest_distances(samples, SMALL, n))


def test_metric_is_permutation_invariant():
    samples = make_dataset(30, 64, SMALL, seed=5).waves + 0.05
    rep = nearest_sine_error(samples, SMALL, 10)
    perm = nearest_sine_error(samples[::-1], SMALL, 10)
    d = nearest_distances(samples, SMALL, 10)
    d_perm = nearest_distances(samples[::-1], SMALL, 10)
    np.testing.assert_array_equal(d[::-1], d_perm)
    assert rep.mean == pytest.approx(perm.mean, rel=1e-14)


def test_chunking_does_not_change_results():
    samples = np.random.default_rng(2).uniform(-1, 1, size=(37, 16))
    np.testing.assert_array_equal(nearest_distances(samples, SMALL, 6, chunk=5),
                                  nearest_distances(samples, SMALL, 6, chunk=64))


def test_default_grid_has_converged_on_dataset_like_samples():
    # 2x refinement oracle at an error level around 1: default -> 2n - 1 moves the metric < 1%
    ranges = SineRanges()
    ds = make_dataset(40, 64, ranges, seed=9)
    samples = ds.waves + np.random.default_rng(9).normal(0, 0.1, ds.waves.shape)
    n = DEFAULT_GRID
    coarse = nearest_sine_error(samples, ranges, n).mean
    fine = nearest_sine_error(samples, ranges, 2 * n - 1).mean
    assert fine <= coarse
    assert (coarse - fine) / fine < 0.01


def test_grid_floor_shrinks_with_resolution():
    # noise-free waves only see the discretisation error
    waves = make_dataset(20, 64, SMALL, seed=4).waves
    errs = [nearest_sine_error(waves, SMALL, n).mean for n in (50, 99, 197)]
    assert errs[0] > errs[1] > errs[2] > 0


def test_resolution_below_two_rejected():
    with pytest.raises(ValueError):
        nearest_sine_error(np.zeros((1, 4)), SMALL, 1)


# --- files -------------------------------------------------------------------------

def test_samples_csv_round_trip(tmp_path):
    x = np.random.default_rng(3).standard_normal((5, 64)) * np.pi
    path = tmp_path / "samples.csv"
    write_samples(path, x)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(f"t{i}" for i in range(64))
    assert read_samples(path, 64).tobytes() == x.tobytes()


@pytest.mark.parametrize("body,needle", [
    ("", "empty"),
    ("t0,t1\n", "no sample rows"),
    ("t0,t1\n1,2\n3\n", "row 3"),
    ("t0,t1\n1,2\n3,4\nx,5\n", "row 4"),
])
def test_malformed_sample_files(tmp_path, body, needle):
    path = tmp_path / "s.csv"
    path.write_text(body)
    with pytest.raises(SampleFileError, match=needle):
        read_samples(path)


def test_sample_header_width_checked(tmp_path):
    path = tmp_path / "s.csv"
    write_samples(path, np.zeros((2, 3)))
    with pytest.raises(SampleFileError):
        read_samples(path, 64)


def test_report_text_and_csv(tmp_path):
    rep = EvalReport(1.25, 0.5, 10, 50)
    assert rep.to_text().splitlines() == ["mean = 1.25", "stderr = 0.5", "n = 10", "grid_resolution = 50"]
    write_report(tmp_path / "eval.csv", rep)
    assert (tmp_path / "eval.csv").read_text() == "mean,stderr,n,grid_resolution\n1.25,0.5,10,50\n"


def test_relative_improvement_arithmetic():
    assert relative_improvement(1.13, 1.51) == pytest.approx(0.2517, abs=1e-4)
    assert relative_improvement(2.0, 2.0) == 0.0
    rows = [(0, EvalReport(1.0, 0, 1, 2), EvalReport(2.0, 0, 1, 2)),
            (1, EvalReport(3.0, 0, 1, 2), EvalReport(2.0, 0, 1, 2))]
    s = summarize(rows)
    assert s["improvement"] == 0.0 and s["wins"] == 1
