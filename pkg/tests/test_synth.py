import numpy as np
import pytest

from penterm.data import ALPHABET, FORCE
from penterm.preprocess import resample
from penterm.synth import (
    CorpusBundle,
    WriterStyle,
    canonical_stroke_counts,
    default_style,
    generate_corpus,
    generate_term,
    load_templates,
    random_style,
    sample_label,
    strokes_for_count,
)


def pen_runs(rec, threshold=0.5):
    """Contiguous runs where raw force exceeds threshold * press."""
    on = rec.channels[:, FORCE] > threshold
    edges = np.diff(on.astype(np.int8), prepend=0, append=0)
    return list(zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)))


def test_templates_cover_alphabet():
    t = load_templates()
    assert set(t) == set(ALPHABET)
    for polys in t.values():
        for p in polys:
            assert p.ndim == 2 and p.shape[1] == 2 and len(p) >= 2
    counts = canonical_stroke_counts()
    assert counts[":"] == 2
    for glyph in "=+457":
        assert counts[glyph] == 2


def test_sample_label_length_bounds():
    rng = np.random.default_rng(1)
    for _ in range(50):
        s = sample_label(rng)
        assert 10 <= len(s) <= 20
        assert all(g in ALPHABET for g in s)


def test_sample_label_exact_length():
    rng = np.random.default_rng(2)
    for _ in range(20):
        assert len(sample_label(rng, 10, 10)) == 10


def test_sample_label_structure():
    rng = np.random.default_rng(3)
    for _ in range(100):
        s = sample_label(rng)
        assert s[0] in "0123456789" and s[-1] in "0123456789"
        for a, b in zip(s, s[1:]):  # no adjacent operators
            assert not (a in "+-·:=" and b in "+-·:=")


def test_sample_label_coverage_over_1000_draws():
    rng = np.random.default_rng(123)
    seen = set()
    for _ in range(1000):
        seen.update(sample_label(rng))
    assert seen == set(ALPHABET)


def test_strokes_for_count_join_and_split():
    polys = load_templates()["="]
    assert len(strokes_for_count(polys, 2)) == 2
    joined = strokes_for_count(polys, 1)
    assert len(joined) == 1 and len(joined[0]) == 4
    split = strokes_for_count(load_templates()["-"], 2)
    assert len(split) == 2
    assert all(len(p) >= 2 for p in split)


def test_colon_has_two_pen_down_intervals():
    style = default_style()
    rec = generate_term(style, ":1", np.random.default_rng(0))
    seg = rec.truth_segments[0][0]
    runs = pen_runs(rec)
    runs_in_colon = [r for r in runs if r[0] >= seg.start and r[1] <= seg.end]
    assert len(runs_in_colon) == 2


def test_generate_term_deterministic():
    style = default_style()
    a = generate_term(style, "12+34", np.random.default_rng(99))
    b = generate_term(style, "12+34", np.random.default_rng(99))
    assert np.array_equal(a.channels, b.channels)
    assert np.array_equal(a.millis_delta, b.millis_delta)


def test_inter_character_gap_force_is_low():
    # With sigma(force) <= press/10 the pen-up force stays below 0.3 * press.
    style = default_style()
    rng = np.random.default_rng(7)
    for _ in range(5):
        rec = generate_term(style, sample_label(rng), rng)
        force = rec.channels[:, FORCE]
        segs = [s for s, _ in rec.truth_segments]
        for prev, nxt in zip(segs, segs[1:]):
            gap = force[prev.end : nxt.start]
            assert gap.max() < 0.3 * style.force_press


def test_truth_segments_consistent_with_force():
    style = default_style()
    rng = np.random.default_rng(21)
    rec = generate_term(style, sample_label(rng), rng)
    force = rec.channels[:, FORCE]
    segs = [s for s, _ in rec.truth_segments]
    for seg in segs:
        assert force[seg.start : seg.end].max() > 0.5 * style.force_press
    for prev, nxt in zip(segs, segs[1:]):
        low = force[prev.end : nxt.start] < 0.1 * style.force_press
        best = run = 0
        for flag in low:
            run = run + 1 if flag else 0
            best = max(best, run)
        assert best >= 3


def test_truth_segments_survive_resampling():
    rng = np.random.default_rng(5)
    style = default_style()
    rec = generate_term(style, sample_label(rng), rng)
    out = resample(rec, 10)
    for seg, _ in out.truth_segments:
        assert len(seg) >= 4


def test_truth_count_equals_label_length():
    rng = np.random.default_rng(11)
    style = default_style()
    for _ in range(5):
        label = sample_label(rng)
        rec = generate_term(style, label, rng)
        assert len(rec.truth_segments) == len(label)
        glyphs = "".join(c.glyph for _, c in rec.truth_segments)
        assert glyphs == label


def test_corrupt_char_adds_a_stroke():
    style = default_style()
    clean = generate_term(style, "111", np.random.default_rng(4))
    bad = generate_term(style, "111", np.random.default_rng(4), corrupt_char=1)
    assert len(pen_runs(bad)) == len(pen_runs(clean)) + 1


def test_style_invariants():
    with pytest.raises(ValueError):
        WriterStyle(stroke_counts={":": 1})
    with pytest.raises(ValueError):
        WriterStyle(stroke_counts={"1": 1}, intra_char_gap_ms=(200.0, 5.0))
    with pytest.raises(ValueError):
        WriterStyle(stroke_counts={"1": 1}, sample_period_ms=(3, 12))


def test_generate_corpus_shape_and_labels():
    bundle = generate_corpus(3, 4, seed=0)
    assert isinstance(bundle, CorpusBundle)
    assert len(bundle.recordings) == 3
    for writer, recs in bundle.recordings.items():
        assert len(recs) == 4
        for rec in recs:
            assert rec.label is not None
            assert rec.truth_segments is not None
            assert rec.writer_id == writer


def test_generate_corpus_deterministic():
    a = generate_corpus(2, 3, seed=17)
    b = generate_corpus(2, 3, seed=17)
    for writer in a.recordings:
        for ra, rb in zip(a.recordings[writer], b.recordings[writer]):
            assert np.array_equal(ra.channels, rb.channels)
            assert ra.label == rb.label


def test_writer_styles_differ_across_subseeds():
    # 100 independent writer pairs: styles share all five coin-flip glyph
    # counts only ~1/32 of the time, so most pairs must differ.
    rng_pairs = np.random.SeedSequence(42).spawn(200)
    styles = [random_style(np.random.default_rng(s)) for s in rng_pairs]
    differing = sum(
        styles[2 * i].stroke_counts != styles[2 * i + 1].stroke_counts for i in range(100)
    )
    assert differing >= 80


def test_corrupted_terms_are_tracked():
    bundle = generate_corpus(2, 10, seed=9, corrupt_fraction=0.5)
    total_bad = sum(len(v) for v in bundle.corrupted.values())
    assert 0 < total_bad < 20
