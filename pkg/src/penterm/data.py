"""Recording data model, the 15-character alphabet, and corpus file I/O.

A recording is an ordered stream of pen sensor samples: 13 channels per
sample (two 3-axis accelerometers, gyroscope, magnetometer, tip force)
plus a millisecond delta to the previous sample.  Corpora are directories
of per-writer CSV files with TSV sidecars for labels and, on synthetic
data, ground-truth segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

ALPHABET = "0123456789+-·:="  # digits, plus, minus, middle dot, colon, equals
N_CLASSES = len(ALPHABET)

CHANNEL_NAMES = (
    "afx", "afy", "afz",  # accelerometer, front (tip) end
    "arx", "ary", "arz",  # accelerometer, rear end
    "gx", "gy", "gz",     # gyroscope
    "mx", "my", "mz",     # magnetometer
    "force",              # tip force
)
N_CHANNELS = len(CHANNEL_NAMES)
FORCE = CHANNEL_NAMES.index("force")

CSV_HEADER = "index,millis_delta," + ",".join(CHANNEL_NAMES)

MAX_LABEL_LEN = 20


class UnknownGlyph(ValueError):
    """A character outside the 15-glyph alphabet."""


class MalformedRow(ValueError):
    """A CSV row with the wrong column count or a non-numeric field."""


class EmptyRecording(ValueError):
    """A recording file with a header but no sample rows."""


class InvalidRecording(ValueError):
    """A recording violating a structural invariant."""


@dataclass(frozen=True)
class CharClass:
    glyph: str
    class_index: int


_GLYPH_TO_CLASS = {g: CharClass(g, i) for i, g in enumerate(ALPHABET)}
_INDEX_TO_CLASS = {c.class_index: c for c in _GLYPH_TO_CLASS.values()}


def char_to_class(glyph: str) -> CharClass:
    """Map a glyph to its fixed class: '0'-'9' -> 0-9, then + - · : = -> 10-14."""
    try:
        return _GLYPH_TO_CLASS[glyph]
    except KeyError:
        raise UnknownGlyph(f"not in alphabet: {glyph!r}") from None


def class_to_char(index: int) -> CharClass:
    try:
        return _INDEX_TO_CLASS[index]
    except KeyError:
        raise UnknownGlyph(f"no class with index {index}") from None


def one_hot(c: CharClass) -> np.ndarray:
    v = np.zeros(N_CLASSES)
    v[c.class_index] = 1.0
    return v


@dataclass(frozen=True)
class Segment:
    """Half-open sample-index interval [start, end), optionally tagged with a class."""

    start: int
    end: int
    char: CharClass | None = None

    def __post_init__(self):
        if not (0 <= self.start < self.end):
            raise InvalidRecording(f"bad segment bounds [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class SensorSample:
    index: int
    millis_delta: int
    channels: tuple[float, ...]


@dataclass(eq=False)
class Recording:
    """Ordered sensor samples with optional label and ground-truth segmentation.

    ``millis_delta`` holds integer milliseconds since the previous sample
    (0 for the first); ``channels`` is an (n, 13) float array in the
    CHANNEL_NAMES order.  ``truth_segments`` only exists on synthetic data.
    """

    writer_id: str
    millis_delta: np.ndarray
    channels: np.ndarray
    label: str | None = None
    truth_segments: list[tuple[Segment, CharClass]] | None = None
    rec_id: str = ""

    def __post_init__(self):
        self.millis_delta = np.asarray(self.millis_delta, dtype=np.int64)
        self.channels = np.asarray(self.channels, dtype=np.float64)
        n = len(self.millis_delta)
        if n == 0:
            raise InvalidRecording("recording has no samples")
        if self.channels.shape != (n, N_CHANNELS):
            raise InvalidRecording(
                f"channels shape {self.channels.shape}, expected ({n}, {N_CHANNELS})"
            )
        if self.millis_delta[0] != 0:
            raise InvalidRecording("first millis_delta must be 0")
        if (self.millis_delta < 0).any():
            raise InvalidRecording("negative millis_delta")
        if (self.channels[:, FORCE] < 0).any():
            raise InvalidRecording("negative force value")
        if self.label is not None:
            if not 1 <= len(self.label) <= MAX_LABEL_LEN:
                raise InvalidRecording(f"label length {len(self.label)} outside [1, {MAX_LABEL_LEN}]")
            for g in self.label:
                char_to_class(g)  # raises UnknownGlyph
        if self.truth_segments is not None:
            if self.label is None or len(self.truth_segments) != len(self.label):
                raise InvalidRecording("truth segment count must equal label length")
            prev_end = 0
            for seg, _ in self.truth_segments:
                if seg.start < prev_end or seg.end > n:
                    raise InvalidRecording("truth segments must be ordered, disjoint, in bounds")
                prev_end = seg.end

    def __len__(self) -> int:
        return len(self.millis_delta)

    def times(self) -> np.ndarray:
        """Absolute timestamps in milliseconds (cumulative deltas)."""
        return np.cumsum(self.millis_delta)

    def sample(self, i: int) -> SensorSample:
        return SensorSample(i, int(self.millis_delta[i]), tuple(self.channels[i]))


def parse_recording(text: str | Iterable[str], writer_id: str) -> Recording:
    """Parse the 15-column recording CSV; label/truth attach at corpus level."""
    lines = text.splitlines() if isinstance(text, str) else [ln.rstrip("\n") for ln in text]
    if not lines or lines[0].strip() != CSV_HEADER:
        raise MalformedRow("line 1: missing or wrong header")
    deltas, rows = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != 2 + N_CHANNELS:
            raise MalformedRow(f"line {lineno}: expected {2 + N_CHANNELS} columns, got {len(fields)}")
        try:
            int(fields[0])
            delta = int(fields[1])
            values = [float(f) for f in fields[2:]]
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric field") from None
        if not rows and delta != 0:
            raise MalformedRow(f"line {lineno}: first millis_delta must be 0")
        if delta < 0:
            raise MalformedRow(f"line {lineno}: negative millis_delta")
        if values[FORCE] < 0:
            raise MalformedRow(f"line {lineno}: negative force")
        deltas.append(delta)
        rows.append(values)
    if not rows:
        raise EmptyRecording("no sample rows")
    return Recording(writer_id, np.array(deltas), np.array(rows))


def emit_recording(rec: Recording) -> str:
    """Inverse of parse_recording; channels rounded to 6 decimal digits."""
    lines = [CSV_HEADER]
    for i in range(len(rec)):
        values = ",".join(f"{v:.6f}" for v in rec.channels[i])
        lines.append(f"{i},{rec.millis_delta[i]},{values}")
    return "\n".join(lines) + "\n"


def _parse_truth(text: str, n_samples: int) -> list[tuple[Segment, CharClass]]:
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise MalformedRow(f"line {lineno}: expected start<TAB>end<TAB>glyph")
        try:
            start, end = int(fields[0]), int(fields[1])
        except ValueError:
            raise MalformedRow(f"line {lineno}: non-numeric bound") from None
        c = char_to_class(fields[2])
        if end > n_samples:
            raise MalformedRow(f"line {lineno}: segment end {end} beyond recording")
        out.append((Segment(start, end, c), c))
    return out


def _emit_truth(truth: list[tuple[Segment, CharClass]]) -> str:
    return "".join(f"{seg.start}\t{seg.end}\t{c.glyph}\n" for seg, c in truth)


def _read_labels(path: Path) -> dict[str, str]:
    labels = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        stem, _, label = line.partition("\t")
        labels[stem] = label
    return labels


def load_corpus(root: str | Path) -> dict[str, list[Recording]]:
    """Load <root>/<writer>/<nnn>.csv recordings; ordering is lexicographic."""
    root = Path(root)
    corpus: dict[str, list[Recording]] = {}
    for writer_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        writer = writer_dir.name
        labels_path = writer_dir / "labels.tsv"
        labels = _read_labels(labels_path) if labels_path.exists() else {}
        recs = []
        for csv_path in sorted(writer_dir.glob("*.csv")):
            try:
                parsed = parse_recording(csv_path.read_text(encoding="utf-8"), writer)
                truth_path = writer_dir / f"{csv_path.stem}.truth.tsv"
                truth = (
                    _parse_truth(truth_path.read_text(encoding="utf-8"), len(parsed))
                    if truth_path.exists()
                    else None
                )
                rec = Recording(
                    writer,
                    parsed.millis_delta,
                    parsed.channels,
                    label=labels.get(csv_path.stem),
                    truth_segments=truth,
                    rec_id=csv_path.stem,
                )
            except ValueError as e:
                raise type(e)(f"{csv_path}: {e}") from e
            recs.append(rec)
        corpus[writer] = recs
    return corpus


def save_corpus(corpus: dict[str, list[Recording]], root: str | Path) -> None:
    """Write the corpus layout load_corpus reads, including truth sidecars."""
    root = Path(root)
    for writer, recs in corpus.items():
        writer_dir = root / writer
        writer_dir.mkdir(parents=True, exist_ok=True)
        label_lines = []
        for i, rec in enumerate(recs):
            stem = rec.rec_id or f"{i:03d}"
            (writer_dir / f"{stem}.csv").write_text(emit_recording(rec), encoding="utf-8")
            if rec.label is not None:
                label_lines.append(f"{stem}\t{rec.label}\n")
            if rec.truth_segments is not None:
                (writer_dir / f"{stem}.truth.tsv").write_text(
                    _emit_truth(rec.truth_segments), encoding="utf-8"
                )
        if label_lines:
            (writer_dir / "labels.tsv").write_text("".join(label_lines), encoding="utf-8")
