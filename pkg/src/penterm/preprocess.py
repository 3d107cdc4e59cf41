"""Uniform resampling, column-wise normalization, and sliding-window slicing.

Pipeline order is fixed: resample to a uniform period first, then
normalize each channel to [0, 1] per recording.  Windows are only ever
cut from normalized, resampled data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import FORCE, N_CHANNELS, CharClass, InvalidRecording, Recording, Segment

WINDOW_SIZE = 16
WINDOW_STRIDE = 12  # 4 samples of overlap between consecutive windows
RESAMPLE_PERIOD_MS = 10


class TooShort(ValueError):
    """Fewer than two samples; nothing to interpolate."""


class NonMonotonicTime(ValueError):
    """Accumulated timestamps are not strictly increasing."""


@dataclass(frozen=True)
class Window:
    """A fixed (16, 13) slice of normalized, resampled data.

    ``source`` records provenance as (recording id, segment, offset of the
    window start within the segment).
    """

    values: np.ndarray
    source: tuple[str, Segment | None, int]
    char: CharClass | None = None

    def __post_init__(self):
        if self.values.shape[0] != WINDOW_SIZE or self.values.shape[1] != N_CHANNELS:
            raise InvalidRecording(f"window shape {self.values.shape}")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise InvalidRecording("window values outside [0, 1]")


def _remap_segment(seg: Segment, times: np.ndarray, period: int, n_new: int) -> Segment:
    # Segment covers original times [t(start), t(end-1)]; take the grid
    # indices inside that span, keeping at least one sample.
    t_start, t_end = times[seg.start], times[seg.end - 1]
    start = int(np.ceil(t_start / period))
    end = int(t_end // period) + 1
    start = min(max(start, 0), n_new - 1)
    end = max(min(end, n_new), start + 1)
    return Segment(start, end, seg.char)


def resample(rec: Recording, period_ms: int = RESAMPLE_PERIOD_MS) -> Recording:
    """Linearly interpolate every channel onto a uniform period_ms grid."""
    if len(rec) < 2:
        raise TooShort(f"{len(rec)} samples")
    times = rec.times()
    if (np.diff(times) <= 0).any():
        raise NonMonotonicTime("duplicate or decreasing timestamps")
    grid = np.arange(0, times[-1] + 1, period_ms, dtype=np.int64)
    channels = np.empty((len(grid), N_CHANNELS))
    for c in range(N_CHANNELS):
        channels[:, c] = np.interp(grid, times, rec.channels[:, c])
    deltas = np.full(len(grid), period_ms, dtype=np.int64)
    deltas[0] = 0
    truth = None
    if rec.truth_segments is not None:
        truth = [
            (_remap_segment(seg, times, period_ms, len(grid)), c)
            for seg, c in rec.truth_segments
        ]
    return Recording(rec.writer_id, deltas, channels, rec.label, truth, rec.rec_id)


def normalize(rec: Recording) -> Recording:
    """Per-channel (v - min) / (max - min) over this recording; constants map to 0."""
    lo = rec.channels.min(axis=0)
    hi = rec.channels.max(axis=0)
    span = hi - lo
    out = np.zeros_like(rec.channels)
    nonconst = span > 0
    out[:, nonconst] = (rec.channels[:, nonconst] - lo[nonconst]) / span[nonconst]
    return Recording(
        rec.writer_id, rec.millis_delta.copy(), out, rec.label, rec.truth_segments, rec.rec_id
    )


def prepare(rec: Recording, period_ms: int = RESAMPLE_PERIOD_MS) -> Recording:
    """Resample then normalize; the canonical front of every pipeline stage."""
    return normalize(resample(rec, period_ms))


def count_windows(length: int, size: int = WINDOW_SIZE, stride: int = WINDOW_STRIDE) -> int:
    """Closed-form window count: 0 if too short, else 1 + floor((L - size) / stride)."""
    if size <= 0 or stride <= 0:
        raise ValueError("size and stride must be positive")
    if length < size:
        return 0
    return 1 + (length - size) // stride


def make_windows(
    values: np.ndarray,
    rec_id: str = "",
    segment: Segment | None = None,
    char: CharClass | None = None,
    size: int = WINDOW_SIZE,
    stride: int = WINDOW_STRIDE,
) -> list[Window]:
    """Cut windows at offsets 0, stride, 2*stride, ...; the remainder is discarded."""
    n = count_windows(len(values), size, stride)
    return [
        Window(values[k * stride : k * stride + size], (rec_id, segment, k * stride), char)
        for k in range(n)
    ]
