"""Synthetic pen-trace generator with known ground-truth segmentation.

Every term is rendered from hand-authored per-glyph stroke polylines
(templates.json): the pen follows each polyline while pressing, lifts
between strokes and characters, and the 13 channels are derived from the
trajectory (finite-difference acceleration, heading-rate gyro, constant
magnetic field, force plateau) plus Gaussian noise.  Kinematics are
deliberately crude; the point is a controllable corpus whose boundary
and identity cues mirror the real task.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .data import ALPHABET, FORCE, N_CHANNELS, Recording, Segment, char_to_class

OPERATORS = "+-·:="
DIGITS = "0123456789"

MS_PER_UNIT = 260.0   # pen time per unit of template arc length
MIN_STROKE_MS = 220.0  # even a dot takes this long to press and release
MIN_GAP_MS = 14.0
CHAR_ADVANCE = 0.78
CLIP_ACC = 250.0
CLIP_GYRO = 120.0
MAG_STRENGTH = 45.0

_templates_cache: dict[str, list[np.ndarray]] | None = None


def load_templates() -> dict[str, list[np.ndarray]]:
    """Per-glyph stroke polylines (unit square), cached after first load."""
    global _templates_cache
    if _templates_cache is None:
        raw = json.loads(resources.files("penterm").joinpath("templates.json").read_text("utf-8"))
        _templates_cache = {
            glyph: [np.asarray(poly, dtype=np.float64) for poly in polys]
            for glyph, polys in raw["strokes"].items()
        }
        assert set(_templates_cache) == set(ALPHABET)
    return _templates_cache


def canonical_stroke_counts() -> dict[str, int]:
    return {glyph: len(polys) for glyph, polys in load_templates().items()}


@dataclass
class WriterStyle:
    """Per-writer rendering parameters; stroke_counts is the writer's habit."""

    stroke_counts: dict[str, int]
    speed_scale: float = 1.0
    inter_char_gap_ms: tuple[float, float] = (150.0, 25.0)  # (mean, jitter sd)
    # Long enough to survive 10 ms resampling as a visible pen lift, short
    # enough that activity cleanup can flip it back inside a character.
    intra_char_gap_ms: tuple[float, float] = (45.0, 5.0)
    noise_sigma: dict[str, float] = field(
        default_factory=lambda: {"acc": 6.0, "gyro": 3.0, "mag": 1.5, "force": 0.05, "tremor": 6e-4}
    )
    force_press: float = 1.0
    sample_period_ms: tuple[int, int] = (8, 13)  # inclusive jitter range
    glyph_scale: float = 1.0
    slant: float = 0.0
    mag_field: tuple[float, float, float] = (28.0, -12.0, 31.0)

    def __post_init__(self):
        if self.stroke_counts.get(":", 2) < 2:
            raise ValueError("':' is written as two separated dots; needs >= 2 strokes")
        if any(n < 1 for n in self.stroke_counts.values()):
            raise ValueError("stroke counts must be positive")
        if not self.intra_char_gap_ms[0] < self.inter_char_gap_ms[0]:
            raise ValueError("intra-character gaps must be shorter than inter-character gaps")
        if any(s < 0 for s in self.noise_sigma.values()):
            raise ValueError("noise sigmas must be non-negative")
        lo, hi = self.sample_period_ms
        if not (5 <= lo <= hi <= 30):
            raise ValueError("sample period range must lie within {5..30} ms")
        if self.force_press <= 0 or self.speed_scale <= 0:
            raise ValueError("force_press and speed_scale must be positive")


def default_style() -> WriterStyle:
    return WriterStyle(stroke_counts=canonical_stroke_counts())


def random_style(rng: np.random.Generator) -> WriterStyle:
    """A randomized writer: ':' always two dots, the optionally-joined glyphs
    ('=', '+', '4', '5', '7') drawn with one or two strokes at random."""
    counts = dict.fromkeys(ALPHABET, 1)
    counts[":"] = 2
    for glyph in "=+457":
        counts[glyph] = int(rng.integers(1, 3))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return WriterStyle(
        stroke_counts=counts,
        speed_scale=float(rng.uniform(0.85, 1.2)),
        inter_char_gap_ms=(float(rng.uniform(130, 185)), 25.0),
        intra_char_gap_ms=(float(rng.uniform(40, 52)), 5.0),
        noise_sigma={
            "acc": float(rng.uniform(4.0, 9.0)),
            "gyro": float(rng.uniform(2.0, 5.0)),
            "mag": float(rng.uniform(1.0, 2.0)),
            "force": float(rng.uniform(0.008, 0.025)),
            "tremor": float(rng.uniform(4e-4, 9e-4)),
        },
        force_press=float(rng.uniform(0.9, 1.1)),
        glyph_scale=float(rng.uniform(0.9, 1.12)),
        slant=float(rng.uniform(-0.12, 0.18)),
        mag_field=tuple(MAG_STRENGTH * direction),
    )


def sample_label(rng: np.random.Generator, min_len: int = 10, max_len: int = 20) -> str:
    """A plausible term: digit runs separated by single operators."""
    if min_len > max_len or min_len < 1:
        raise ValueError("need 1 <= min_len <= max_len")
    n = int(rng.integers(min_len, max_len + 1))
    out: list[str] = []
    remaining = n
    while remaining > 0:
        run = min(remaining, int(rng.integers(1, 4)))
        out.extend(DIGITS[i] for i in rng.integers(0, 10, run))
        remaining -= run
        if remaining >= 2:  # an operator must be followed by at least one digit
            out.append(OPERATORS[int(rng.integers(0, len(OPERATORS)))])
            remaining -= 1
    return "".join(out)


def _arc_lengths(poly: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.diff(poly, axis=0), axis=1)


def strokes_for_count(polylines: list[np.ndarray], count: int) -> list[np.ndarray]:
    """Adjust a glyph's canonical decomposition to a writer's stroke count.

    Fewer strokes: adjacent polylines are joined (the pen stays down along
    the connecting line).  More strokes: the longest polyline is split at
    its arc midpoint.
    """
    strokes = [p.copy() for p in polylines]
    while len(strokes) > count:
        gaps = [
            np.linalg.norm(strokes[i + 1][0] - strokes[i][-1]) for i in range(len(strokes) - 1)
        ]
        i = int(np.argmin(gaps))
        strokes[i : i + 2] = [np.vstack([strokes[i], strokes[i + 1]])]
    while len(strokes) < count:
        arcs = [_arc_lengths(p).sum() for p in strokes]
        i = int(np.argmax(arcs))
        poly = strokes[i]
        seg = _arc_lengths(poly)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        half = cum[-1] / 2
        j = int(np.searchsorted(cum, half))  # split inside segment j-1 .. j
        frac = (half - cum[j - 1]) / seg[j - 1]
        mid = poly[j - 1] + frac * (poly[j] - poly[j - 1])
        strokes[i : i + 1] = [np.vstack([poly[:j], mid]), np.vstack([mid, poly[j:]])]
    return strokes


def _gap_duration(rng, mean_jitter, floor=MIN_GAP_MS):
    mean, jitter = mean_jitter
    return max(floor, float(rng.normal(mean, jitter)))


def generate_term(
    style: WriterStyle,
    label: str,
    rng: np.random.Generator,
    writer_id: str = "w00",
    rec_id: str = "000",
    corrupt_char: int | None = None,
) -> Recording:
    """Render one labelled term; truth segments span each character's pen-down run.

    ``corrupt_char`` forces one extra pen lift on that character, breaking
    the writer's stroke-count habit (used to exercise rejection paths).
    """
    templates = load_templates()
    shear = np.array([[1.0, 0.0], [style.slant, 1.0]])
    scale = style.glyph_scale

    # Per-character stroke geometry, laid out left to right.
    char_strokes: list[list[np.ndarray]] = []
    x_origin = 0.0
    for ci, glyph in enumerate(label):
        count = style.stroke_counts.get(glyph, 1)
        if ci == corrupt_char:
            count += 1
        strokes = strokes_for_count(templates[glyph], count)
        placed = [p * scale @ shear.T + np.array([x_origin, 0.0]) for p in strokes]
        char_strokes.append(placed)
        x_origin += CHAR_ADVANCE * scale

    # Piecewise-linear trajectory: knots (time, x, y) plus pen phases.
    first = char_strokes[0][0][0]
    knot_t, knot_x, knot_y = [0.0], [first[0]], [first[1]]
    phase_end: list[float] = []
    phase_pen: list[bool] = []
    phase_char: list[int] = []
    t = 0.0

    def push(duration, points_at_frac, pen, ci):
        nonlocal t
        for frac, (px, py) in points_at_frac:
            knot_t.append(t + frac * duration)
            knot_x.append(px)
            knot_y.append(py)
        t += duration
        phase_end.append(t)
        phase_pen.append(pen)
        phase_char.append(ci)

    push(_gap_duration(rng, (70.0, 15.0), floor=40.0), [(1.0, first)], False, -1)
    for ci, strokes in enumerate(char_strokes):
        for si, poly in enumerate(strokes):
            seg = _arc_lengths(poly)
            keep = seg > 0
            pts = np.vstack([poly[:1], poly[1:][keep]])
            seg = seg[keep]
            arc = seg.sum()
            duration = max(MIN_STROKE_MS, arc * MS_PER_UNIT) / style.speed_scale
            fracs = np.cumsum(seg) / arc
            push(duration, list(zip(fracs, pts[1:])), True, ci)
            if si + 1 < len(strokes):
                target = strokes[si + 1][0]
                push(
                    _gap_duration(rng, style.intra_char_gap_ms, floor=34.0),
                    [(1.0, target)],
                    False,
                    ci,
                )
        if ci + 1 < len(char_strokes):
            target = char_strokes[ci + 1][0][0]
            push(_gap_duration(rng, style.inter_char_gap_ms, floor=90.0), [(1.0, target)], False, -1)
    push(_gap_duration(rng, (70.0, 15.0), floor=40.0), [(1.0, (knot_x[-1], knot_y[-1]))], False, -1)

    # Sample the timeline at a jittered integer period.
    lo, hi = style.sample_period_ms
    draws = rng.integers(lo, hi + 1, size=int(t // lo) + 2)
    times = np.concatenate([[0], np.cumsum(draws)]).astype(np.float64)
    times = times[times < t]
    n = len(times)
    deltas = np.diff(times, prepend=0.0).astype(np.int64)

    phase_idx = np.searchsorted(np.asarray(phase_end), times, side="right")
    phase_idx = np.minimum(phase_idx, len(phase_end) - 1)
    pen = np.asarray(phase_pen)[phase_idx]
    char_idx = np.asarray(phase_char)[phase_idx]

    sigma = style.noise_sigma
    x = np.interp(times, knot_t, knot_x) + rng.normal(0, sigma["tremor"], n)
    y = np.interp(times, knot_t, knot_y) + rng.normal(0, sigma["tremor"], n)

    dt = deltas / 1000.0
    dt[0] = dt[1] if n > 1 else 0.01
    vx, vy = np.gradient(x) / dt, np.gradient(y) / dt
    ax, ay = np.gradient(vx) / dt, np.gradient(vy) / dt
    theta = np.unwrap(np.arctan2(vy, vx))
    omega = np.gradient(theta) / dt

    channels = np.empty((n, N_CHANNELS))
    channels[:, 0] = np.clip(ax, -CLIP_ACC, CLIP_ACC) + rng.normal(0, sigma["acc"], n)
    channels[:, 1] = np.clip(ay, -CLIP_ACC, CLIP_ACC) + rng.normal(0, sigma["acc"], n)
    channels[:, 2] = 5.0 + rng.normal(0, sigma["acc"], n)
    channels[:, 3] = np.clip(0.55 * ax, -CLIP_ACC, CLIP_ACC) + rng.normal(0, sigma["acc"], n)
    channels[:, 4] = np.clip(0.55 * ay, -CLIP_ACC, CLIP_ACC) + rng.normal(0, sigma["acc"], n)
    channels[:, 5] = 3.0 + rng.normal(0, sigma["acc"], n)
    w = np.clip(omega, -CLIP_GYRO, CLIP_GYRO)
    channels[:, 6] = 0.15 * w + rng.normal(0, sigma["gyro"], n)
    channels[:, 7] = -0.10 * w + rng.normal(0, sigma["gyro"], n)
    channels[:, 8] = w + rng.normal(0, sigma["gyro"], n)
    for k in range(3):
        channels[:, 9 + k] = style.mag_field[k] + rng.normal(0, sigma["mag"], n)

    force = np.where(
        pen,
        style.force_press + rng.normal(0, sigma["force"], n),
        np.abs(rng.normal(0, sigma["force"], n)),
    )
    # Press/release ramp on the first and last sample of every pen-down run.
    edges = np.diff(pen.astype(np.int8), prepend=0, append=0)
    for start, end in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
        force[start] *= 0.55
        force[end - 1] *= 0.55
    channels[:, FORCE] = np.maximum(force, 0.0)

    truth = []
    for ci, glyph in enumerate(label):
        idx = np.flatnonzero(pen & (char_idx == ci))
        if len(idx) == 0:
            raise RuntimeError(f"character {ci} ({glyph!r}) rendered no pen-down samples")
        c = char_to_class(glyph)
        truth.append((Segment(int(idx[0]), int(idx[-1]) + 1, c), c))

    return Recording(writer_id, deltas, channels, label, truth, rec_id)


@dataclass
class CorpusBundle:
    """A generated corpus plus the per-writer truth the tests compare against."""

    recordings: dict[str, list[Recording]]
    styles: dict[str, WriterStyle]
    corrupted: dict[str, set[int]]
    seed: int


def generate_corpus(
    n_writers: int,
    terms_per_writer: int,
    seed: int,
    min_len: int = 10,
    max_len: int = 20,
    corrupt_fraction: float = 0.0,
) -> CorpusBundle:
    """Generate a full corpus; determinism is a pure function of the arguments.

    Each writer gets an independent child seed, so per-writer generation
    could run in parallel without changing the output.
    """
    if n_writers < 1 or terms_per_writer < 1:
        raise ValueError("writer and term counts must be positive")
    recordings: dict[str, list[Recording]] = {}
    styles: dict[str, WriterStyle] = {}
    corrupted: dict[str, set[int]] = {}
    for wi, child in enumerate(np.random.SeedSequence(seed).spawn(n_writers)):
        rng = np.random.default_rng(child)
        writer = f"w{wi:02d}"
        style = random_style(rng)
        recs, bad = [], set()
        for ti in range(terms_per_writer):
            label = sample_label(rng, min_len, max_len)
            corrupt = None
            if corrupt_fraction > 0 and rng.random() < corrupt_fraction:
                corrupt = int(rng.integers(0, len(label)))
                bad.add(ti)
            recs.append(generate_term(style, label, rng, writer, f"{ti:03d}", corrupt))
        recordings[writer] = recs
        styles[writer] = style
        corrupted[writer] = bad
    return CorpusBundle(recordings, styles, corrupted, seed)
