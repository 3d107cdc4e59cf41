"""Rule-based label splitting for labelled recordings.

The force channel tells when the pen touched the paper, so a labelled
term can be segmented by (1) extracting pen-down strokes, (2) inferring
how many strokes this writer habitually uses per character, and
(3) assigning strokes to label characters left to right.  Terms whose
stroke count cannot be reconciled with the writer's habit are rejected
rather than guessed at; the yield reports how many survive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .data import FORCE, CharClass, Recording, Segment, char_to_class

COUNT_CHOICES = (1, 2, 3)  # plausible strokes per character


@dataclass(frozen=True)
class Stroke:
    """Half-open index interval of one contiguous pen-down run."""

    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


@dataclass
class StrokeCountProfile:
    """Per-writer map glyph -> strokes per character (None while unknown)."""

    writer_id: str
    counts: dict[str, int | None] = field(default_factory=dict)
    support: dict[str, int] = field(default_factory=dict)

    def known(self, glyph: str) -> bool:
        return self.counts.get(glyph) is not None


@dataclass(frozen=True)
class SplitParams:
    force_threshold: float = 0.1   # on normalized force
    min_stroke_len: int = 3        # resampled samples
    merge_gap: int = 2             # runs closer than this are debounced together
    min_votes: int = 3
    agreement: float = 0.75


class SplitRejected(Exception):
    """A term the splitter excludes from training; reason is a stable code."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}{': ' + detail if detail else ''}")
        self.reason = reason


class NoEvidence(ValueError):
    """No recording of this writer produced a usable stroke-count vote."""


def strokes_from_force(
    force: np.ndarray,
    threshold: float = 0.1,
    min_len: int = 3,
    merge_gap: int = 2,
) -> list[Stroke]:
    """Maximal runs with force > threshold, debounced and length-filtered.

    Runs separated by fewer than merge_gap samples are merged (the merged
    stroke spans the below-threshold gap); runs shorter than min_len are
    then discarded.
    """
    above = np.asarray(force) > threshold
    edges = np.diff(above.astype(np.int8), prepend=0, append=0)
    runs = list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))
    merged: list[list[int]] = []
    for start, end in runs:
        if merged and start - merged[-1][1] < merge_gap:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    return [Stroke(int(s), int(e)) for s, e in merged if e - s >= min_len]


def extract_strokes(rec: Recording, params: SplitParams = SplitParams()) -> list[Stroke]:
    """Strokes of a resampled, normalized recording."""
    return strokes_from_force(
        rec.channels[:, FORCE], params.force_threshold, params.min_stroke_len, params.merge_gap
    )


def resolve_votes(votes: dict[int, int], min_votes: int = 3, agreement: float = 0.75) -> int | None:
    """A count is Known only if enough votes exist and they mostly agree."""
    total = sum(votes.values())
    if total < min_votes:
        return None
    top = min(v for v, n in votes.items() if n == max(votes.values()))
    return top if votes[top] / total >= agreement else None


def _objective(occ: np.ndarray, strokes: np.ndarray, assign: np.ndarray) -> int:
    return int(np.abs(occ @ assign - strokes).sum())


def _coordinate_descent(occ, strokes, start):
    assign = start.copy()
    best = _objective(occ, strokes, assign)
    for _ in range(50):
        changed = False
        for j in range(len(assign)):
            current = assign[j]
            for candidate in COUNT_CHOICES:
                if candidate == current:
                    continue
                assign[j] = candidate
                obj = _objective(occ, strokes, assign)
                if obj < best:
                    best, current, changed = obj, candidate, True
            assign[j] = current
        if not changed:
            break
    return assign, best


def infer_profile(
    writer_id: str,
    recordings: list[Recording],
    params: SplitParams = SplitParams(),
) -> StrokeCountProfile:
    """Infer the writer's stroke counts from labelled, prepared recordings.

    Terms whose stroke count equals the label length vote 1 for every
    character.  The remaining terms vote through a constrained search:
    coordinate descent over per-class counts in {1,2,3} (one assignment
    shared by all such terms, ':' seeded at two dots) minimizing the total
    stroke-count misfit; every optimal assignment found casts votes for the
    terms it explains exactly.
    """
    labelled = [r for r in recordings if r.label]
    if not labelled:
        raise NoEvidence(f"writer {writer_id} has no labelled recording")
    votes: dict[str, dict[int, int]] = {}

    def cast(glyph: str, count: int, weight: int = 1):
        votes.setdefault(glyph, {}).setdefault(count, 0)
        votes[glyph][count] += weight

    residual: list[tuple[Recording, int]] = []
    for rec in labelled:
        n_strokes = len(extract_strokes(rec, params))
        if n_strokes == len(rec.label):
            for glyph in rec.label:
                cast(glyph, 1)
        else:
            residual.append((rec, n_strokes))

    if residual:
        classes = sorted({g for rec, _ in residual for g in rec.label})
        occ = np.array(
            [[rec.label.count(g) for g in classes] for rec, _ in residual], dtype=np.int64
        )
        strokes = np.array([n for _, n in residual], dtype=np.int64)
        seed = np.ones(len(classes), dtype=np.int64)
        if ":" in classes:
            seed[classes.index(":")] = 2
        # Least-squares estimate of the per-class extra strokes, rounded into
        # the search space: coordinate descent alone stalls in local minima
        # when multi-stroke classes co-occur, this start lands next to the truth.
        excess = strokes - occ.sum(axis=1)
        lsq = np.linalg.lstsq(occ.astype(np.float64), excess.astype(np.float64), rcond=None)[0]
        lsq_start = 1 + np.clip(np.rint(lsq), 0, 2).astype(np.int64)
        starts = [seed, lsq_start, np.full(len(classes), 1), np.full(len(classes), 2)]
        rng = np.random.default_rng(12345)  # fixed: inference must be deterministic
        starts += [rng.integers(1, 4, len(classes)) for _ in range(16)]
        results = [_coordinate_descent(occ, strokes, np.asarray(s, dtype=np.int64)) for s in starts]
        best = min(obj for _, obj in results)
        optima = {tuple(a) for a, obj in results if obj == best}
        for assign in sorted(optima):
            assign = np.asarray(assign)
            fit = occ @ assign == strokes
            for (rec, _), ok in zip(residual, fit):
                if not ok:
                    continue
                for j, g in enumerate(classes):
                    if occurrences := rec.label.count(g):
                        cast(g, int(assign[j]), occurrences)

    if not votes:
        raise NoEvidence(f"writer {writer_id}: no term produced a stroke-count vote")
    profile = StrokeCountProfile(writer_id)
    for glyph in sorted(votes):
        profile.counts[glyph] = resolve_votes(votes[glyph], params.min_votes, params.agreement)
        profile.support[glyph] = sum(votes[glyph].values())
    return profile


def split_term(
    rec: Recording,
    label: str,
    profile: StrokeCountProfile,
    params: SplitParams = SplitParams(),
) -> list[tuple[Segment, CharClass]]:
    """Assign strokes to label characters left to right.

    Raises SplitRejected('unknown_class') if the profile lacks a character,
    or SplitRejected('count_mismatch') if the stroke count disagrees with
    the profile's expectation.
    """
    for glyph in label:
        if not profile.known(glyph):
            raise SplitRejected("unknown_class", repr(glyph))
    strokes = extract_strokes(rec, params)
    expected = sum(profile.counts[g] for g in label)
    if len(strokes) != expected:
        raise SplitRejected("count_mismatch", f"{len(strokes)} strokes, expected {expected}")
    out: list[tuple[Segment, CharClass]] = []
    i = 0
    for glyph in label:
        group = strokes[i : i + profile.counts[glyph]]
        i += profile.counts[glyph]
        c = char_to_class(glyph)
        out.append((Segment(group[0].start, group[-1].end, c), c))
    return out


def corpus_yield(outcomes: Iterable[bool]) -> float:
    """Accepted terms / attempted terms."""
    outcomes = list(outcomes)
    if not outcomes:
        raise ValueError("yield needs at least one split attempt")
    return sum(map(bool, outcomes)) / len(outcomes)
