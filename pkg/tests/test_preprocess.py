import numpy as np
import pytest

from penterm.data import FORCE, N_CHANNELS, Recording, Segment, char_to_class
from penterm.preprocess import (
    NonMonotonicTime,
    TooShort,
    count_windows,
    make_windows,
    normalize,
    prepare,
    resample,
)


def recording_from_times(times, values):
    """Recording whose channel 0 holds `values` at absolute `times` (ms)."""
    deltas = np.diff(times, prepend=times[0])
    channels = np.zeros((len(times), N_CHANNELS))
    channels[:, 0] = values
    return Recording("w", deltas, channels)


def sliding_loop_count(length, size, stride):
    # Brute-force oracle: literally slide the window.
    count, offset = 0, 0
    while offset + size <= length:
        count += 1
        offset += stride
    return count


def test_count_windows_matches_sliding_loop_up_to_200():
    for length in range(201):
        assert count_windows(length, 16, 12) == sliding_loop_count(length, 16, 12)


def test_count_windows_anchors():
    assert count_windows(15) == 0  # too short for one window
    assert count_windows(16) == 1
    assert count_windows(27) == 1
    assert count_windows(28) == 2  # first length that yields a second window
    assert count_windows(40) == 3
    assert count_windows(16, 16, 16) == 1


def test_window_overlap_is_4_samples():
    values = np.linspace(0, 1, 28)[:, None] * np.ones((1, N_CHANNELS))
    w = make_windows(values)
    assert len(w) == 2
    assert np.array_equal(w[0].values[12:], w[1].values[:4])


def test_make_windows_sources_and_class():
    seg = Segment(5, 50)
    values = np.zeros((45, N_CHANNELS))
    w = make_windows(values, "r0", seg, char_to_class("7"))
    assert [win.source[2] for win in w] == [0, 12, 24]
    assert all(win.char.glyph == "7" for win in w)


def test_resample_two_points_linear():
    rec = recording_from_times([0, 20], [0.0, 1.0])
    out = resample(rec, 10)
    assert out.millis_delta.tolist() == [0, 10, 10]
    assert out.channels[:, 0].tolist() == [0.0, 0.5, 1.0]


def test_resample_identity_on_uniform_grid():
    times = np.arange(0, 60, 10)
    values = np.array([0.3, 1.2, -0.5, 0.0, 2.0, 1.0])
    rec = recording_from_times(times, values)
    out = resample(rec, 10)
    assert np.allclose(out.channels[:, 0], values)


def test_resample_preserves_endpoints():
    rec = recording_from_times([0, 7, 13, 30], [1.0, 2.0, 0.5, 3.0])
    out = resample(rec, 10)
    assert out.channels[0, 0] == 1.0
    assert out.channels[-1, 0] == 3.0  # last timestamp on grid


def test_resample_errors():
    with pytest.raises(TooShort):
        resample(recording_from_times([0], [1.0]))
    with pytest.raises(NonMonotonicTime):
        resample(recording_from_times([0, 0, 10], [1.0, 2.0, 3.0]))


def test_resample_against_analytic_trace():
    # Samples of a smooth closed-form signal at jittered times; linear
    # interpolation error is bounded by max|f''| * h^2 / 8 per gap.
    rng = np.random.default_rng(7)
    times = np.concatenate([[0], np.cumsum(rng.integers(5, 31, 400))])
    f = lambda t: np.sin(2 * np.pi * t / 900.0)
    rec = recording_from_times(times, f(times))
    out = resample(rec, 10)
    grid = np.arange(0, times[-1] + 1, 10)
    max_gap = np.diff(times).max()
    curvature = (2 * np.pi / 900.0) ** 2  # max |f''|
    bound = curvature * max_gap**2 / 8
    assert np.abs(out.channels[: len(grid), 0] - f(grid)).max() <= bound


def test_resample_remaps_truth_segments():
    times = np.concatenate([[0], np.cumsum(np.full(59, 7))])  # 60 samples, 7 ms apart
    rec = recording_from_times(times, np.zeros(60))
    c = char_to_class("3")
    rec.label = "3"
    rec.truth_segments = [(Segment(10, 30, c), c)]
    out = resample(rec, 10)
    seg = out.truth_segments[0][0]
    # original segment spans times [70, 203] -> grid indices 7..20 inclusive
    assert (seg.start, seg.end) == (7, 21)


def test_normalize_basic():
    channels = np.zeros((3, N_CHANNELS))
    channels[:, 0] = [2.0, 4.0, 6.0]
    channels[:, 1] = [5.0, 5.0, 5.0]
    rec = Recording("w", np.array([0, 10, 10]), channels)
    out = normalize(rec)
    assert out.channels[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert out.channels[:, 1].tolist() == [0.0, 0.0, 0.0]  # constant channel rule


def test_normalize_idempotent():
    rng = np.random.default_rng(5)
    channels = rng.normal(size=(30, N_CHANNELS))
    channels[:, FORCE] = np.abs(channels[:, FORCE])
    rec = Recording("w", np.concatenate([[0], np.full(29, 10)]), channels)
    once = normalize(rec)
    twice = normalize(once)
    assert np.array_equal(once.channels, twice.channels)
    assert once.channels.min() >= 0.0 and once.channels.max() <= 1.0


def test_prepare_output_in_unit_range():
    rng = np.random.default_rng(11)
    times = np.concatenate([[0], np.cumsum(rng.integers(5, 31, 80))])
    channels = rng.normal(size=(81, N_CHANNELS)) * 3
    channels[:, FORCE] = np.abs(channels[:, FORCE])
    rec = Recording("w", np.diff(times, prepend=0), channels)
    out = prepare(rec)
    assert out.channels.min() >= 0.0 and out.channels.max() <= 1.0
    assert out.millis_delta[1:].tolist() == [10] * (len(out) - 1)
