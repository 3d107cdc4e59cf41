from functools import lru_cache
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from penterm.metrics import binary_f1, confusion_matrix, levenshtein, macro_f1, per_class_f1


def recursive_levenshtein(a, b):
    """Independent oracle: the textbook recursion over suffixes."""

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(
            d(i + 1, j) + 1,
            d(i, j + 1) + 1,
            d(i + 1, j + 1) + (a[i] != b[j]),
        )

    return d(0, 0)


def test_levenshtein_anchors():
    assert levenshtein("12+3", "12+3") == 0
    assert levenshtein("", "123") == 3
    assert levenshtein("123", "") == 3
    assert levenshtein("1·2=4", "1:2=4") == 1


def test_levenshtein_matches_recursive_oracle_short_strings():
    strings = ["".join(p) for n in range(5) for p in product("abc", repeat=n)]
    for a in strings:
        for b in strings:
            assert levenshtein(a, b) == recursive_levenshtein(a, b)


@given(st.text(alphabet="012+", max_size=12), st.text(alphabet="012+", max_size=12))
def test_levenshtein_symmetry_and_identity(a, b):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert (levenshtein(a, b) == 0) == (a == b)


@settings(max_examples=200)
@given(
    st.text(alphabet="01+", max_size=8),
    st.text(alphabet="01+", max_size=8),
    st.text(alphabet="01+", max_size=8),
)
def test_levenshtein_triangle_inequality(a, b, c):
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


def test_confusion_matrix_counts():
    m = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], 3)
    assert m.tolist() == [[1, 1, 0], [0, 1, 0], [0, 0, 1]]
    assert m.sum() == 4


def test_per_class_f1_and_macro():
    truth = [0, 0, 1, 1, 2, 2]
    pred = [0, 0, 1, 0, 2, 2]
    f1 = per_class_f1(truth, pred, 4)
    assert f1[0] == pytest.approx(4 / 5)
    assert f1[1] == pytest.approx(2 / 3)
    assert f1[2] == 1.0
    assert f1[3] == 0.0  # absent class scores 0
    assert macro_f1(truth, pred, 4) == pytest.approx(np.mean([4 / 5, 2 / 3, 1.0, 0.0]))


def test_binary_f1():
    assert binary_f1([1, 1, 0, 0], [1, 1, 0, 0]) == 1.0
    assert binary_f1([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert binary_f1([0, 0], [0, 0]) == 0.0
