import numpy as np
import pytest

from penterm.data import (
    ALPHABET,
    CSV_HEADER,
    FORCE,
    N_CHANNELS,
    N_CLASSES,
    CharClass,
    EmptyRecording,
    InvalidRecording,
    MalformedRow,
    Recording,
    Segment,
    UnknownGlyph,
    char_to_class,
    class_to_char,
    emit_recording,
    load_corpus,
    one_hot,
    parse_recording,
    save_corpus,
)


def make_recording(n=5, writer="w", label=None, seed=0):
    rng = np.random.default_rng(seed)
    deltas = np.concatenate([[0], rng.integers(5, 31, n - 1)])
    channels = rng.normal(size=(n, N_CHANNELS))
    channels[:, FORCE] = np.abs(channels[:, FORCE])
    return Recording(writer, deltas, channels, label=label)


def test_alphabet_has_15_classes():
    assert len(ALPHABET) == N_CLASSES == 15
    assert len(set(ALPHABET)) == 15


def test_char_to_class_fixed_mapping():
    assert char_to_class("0").class_index == 0
    assert char_to_class("9").class_index == 9
    assert char_to_class("+").class_index == 10
    assert char_to_class("-").class_index == 11
    assert char_to_class("·").class_index == 12
    assert char_to_class(":").class_index == 13
    assert char_to_class("=").class_index == 14


def test_char_to_class_rejects_unknown():
    with pytest.raises(UnknownGlyph):
        char_to_class("a")
    with pytest.raises(UnknownGlyph):
        char_to_class("*")


def test_glyph_index_mapping_is_bijective():
    seen = set()
    for g in ALPHABET:
        c = char_to_class(g)
        assert class_to_char(c.class_index) == c
        seen.add(c.class_index)
    assert seen == set(range(15))


def test_one_hot():
    v0 = one_hot(CharClass("0", 0))
    assert v0[0] == 1.0 and v0.sum() == 1.0
    v14 = one_hot(char_to_class("="))
    assert v14[14] == 1.0 and v14.sum() == 1.0
    for g in ALPHABET:
        assert one_hot(char_to_class(g)).sum() == 1.0


def test_parse_recording_well_formed():
    rows = "\n".join(f"{i},{0 if i == 0 else 10}," + ",".join(["0.5"] * 13) for i in range(3))
    rec = parse_recording(CSV_HEADER + "\n" + rows, "w1")
    assert len(rec) == 3
    assert rec.writer_id == "w1"
    assert rec.millis_delta.tolist() == [0, 10, 10]


def test_parse_recording_wrong_column_count():
    bad = CSV_HEADER + "\n0,0," + ",".join(["0.1"] * 12)
    with pytest.raises(MalformedRow, match="line 2"):
        parse_recording(bad, "w")


def test_parse_recording_non_numeric():
    bad = CSV_HEADER + "\n0,0," + ",".join(["0.1"] * 12) + ",oops"
    with pytest.raises(MalformedRow, match="line 2"):
        parse_recording(bad, "w")


def test_parse_recording_header_only():
    with pytest.raises(EmptyRecording):
        parse_recording(CSV_HEADER + "\n", "w")


def test_recording_invariants():
    with pytest.raises(InvalidRecording):
        Recording("w", np.array([5]), np.zeros((1, N_CHANNELS)))  # first delta nonzero
    with pytest.raises(InvalidRecording):
        Recording("w", np.array([0, -1]), np.zeros((2, N_CHANNELS)))
    bad_force = np.zeros((2, N_CHANNELS))
    bad_force[1, FORCE] = -0.1
    with pytest.raises(InvalidRecording):
        Recording("w", np.array([0, 10]), bad_force)
    with pytest.raises(UnknownGlyph):
        Recording("w", np.array([0, 10]), np.zeros((2, N_CHANNELS)), label="ab")
    with pytest.raises(InvalidRecording):
        Recording("w", np.array([0, 10]), np.zeros((2, N_CHANNELS)), label="1" * 21)


def test_segment_bounds():
    with pytest.raises(InvalidRecording):
        Segment(3, 3)
    assert len(Segment(2, 5)) == 3


def test_round_trip_preserves_values():
    rec = make_recording(n=40, seed=3)
    back = parse_recording(emit_recording(rec), rec.writer_id)
    assert back.millis_delta.tolist() == rec.millis_delta.tolist()
    assert np.allclose(back.channels, rec.channels, atol=5e-7)  # 6 decimal digits


def test_corpus_round_trip(tmp_path):
    truth = [(Segment(0, 3, char_to_class("1")), char_to_class("1")),
             (Segment(4, 8, char_to_class("+")), char_to_class("+"))]
    rec_a = make_recording(n=10, writer="wa", seed=1)
    rec_a.label = "1+"
    rec_a.truth_segments = truth
    corpus = {
        "wa": [rec_a, make_recording(n=6, writer="wa", seed=2)],
        "wb": [make_recording(n=8, writer="wb", seed=4)],
    }
    save_corpus(corpus, tmp_path)
    loaded = load_corpus(tmp_path)
    assert sorted(loaded) == ["wa", "wb"]
    assert len(loaded["wa"]) == 2 and len(loaded["wb"]) == 1
    assert loaded["wa"][0].label == "1+"
    got = loaded["wa"][0].truth_segments
    assert [(s.start, s.end, c.glyph) for s, c in got] == [(0, 3, "1"), (4, 8, "+")]
    assert loaded["wa"][1].label is None


def test_load_corpus_deterministic(tmp_path):
    corpus = {"w1": [make_recording(n=7, writer="w1", seed=s) for s in range(3)]}
    save_corpus(corpus, tmp_path)
    first = load_corpus(tmp_path)
    second = load_corpus(tmp_path)
    assert list(first) == list(second)
    for a, b in zip(first["w1"], second["w1"]):
        assert a.rec_id == b.rec_id
        assert np.array_equal(a.channels, b.channels)


def test_load_corpus_empty_root(tmp_path):
    assert load_corpus(tmp_path) == {}


def test_load_corpus_names_bad_file(tmp_path):
    d = tmp_path / "w1"
    d.mkdir()
    (d / "000.csv").write_text(CSV_HEADER + "\n0,0,1,2,3\n", encoding="utf-8")
    with pytest.raises(MalformedRow, match="000.csv"):
        load_corpus(tmp_path)
