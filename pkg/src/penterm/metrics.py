"""Levenshtein distance and the F1 / confusion-matrix helpers used in reports."""

from __future__ import annotations

import numpy as np


def levenshtein(a: str, b: str) -> int:
    """Minimum number of unit-cost insertions, deletions and substitutions."""
    if len(a) < len(b):
        a, b = b, a  # iterate over the longer string, keep the row short
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        prev = cur
    return prev[-1]


def confusion_matrix(truth, pred, n_classes: int) -> np.ndarray:
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (truth, pred), 1)
    return m


def per_class_f1(truth, pred, n_classes: int) -> np.ndarray:
    """F1 per class; classes with no true and no predicted samples score 0."""
    m = confusion_matrix(truth, pred, n_classes)
    tp = np.diag(m).astype(np.float64)
    fp = m.sum(axis=0) - tp
    fn = m.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    out = np.zeros(n_classes)
    nz = denom > 0
    out[nz] = 2 * tp[nz] / denom[nz]
    return out


def macro_f1(truth, pred, n_classes: int) -> float:
    return float(per_class_f1(truth, pred, n_classes).mean())


def binary_f1(truth, pred) -> float:
    """F1 of the positive (True) class."""
    truth = np.asarray(truth, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    tp = int((truth & pred).sum())
    fp = int((~truth & pred).sum())
    fn = int((truth & ~pred).sum())
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)
