"""Per-sample writing/not-writing classification and activity segmentation.

A small network learns active vs inactive from single samples; at test
time its final recurrent layer's output (128 values per sample) feeds a
random forest, whose votes are smoother than the network's own dense
head.  Rule-based cleanup then removes outlier runs and pads short
active regions before they become character segments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import N_CHANNELS, Recording, Segment
from .forest import RandomForest
from .nn import (
    Conv2D,
    Dense,
    Dropout,
    LSTM,
    ModelGraph,
    Reshape,
    TrainConfig,
    predict_proba_batched,
    split_dataset,
    train,
)

INACTIVE, ACTIVE = 0, 1
N_FEATURES = 128
FEATURE_LAYER = 3  # index of the LSTM layer in the extractor stack


class DegenerateData(ValueError):
    """Forest training needs both classes present."""


def build_boundary_extractor(seed: int, l2_rate: float = 0.01, dtype=np.float64) -> ModelGraph:
    """Single-sample classifier: 1x13 input, [1,1] kernels, LSTM of 128."""
    return ModelGraph(
        [
            Conv2D((1, 1), 32),
            Conv2D((1, 1), 64),
            Reshape((1, 13 * 64)),  # one-step sequence for the LSTM
            LSTM(N_FEATURES, return_last=True),
            Dropout(0.5),
            Dense(2, "softmax"),
        ],
        input_shape=(1, N_CHANNELS, 1),
        seed=seed,
        l2_rate=l2_rate,
        dtype=dtype,
    )


def samples_as_batch(rec: Recording) -> np.ndarray:
    """Each sample of a prepared recording as a (1, 13, 1) network input."""
    return rec.channels.reshape(len(rec), 1, N_CHANNELS, 1)


def activity_from_segments(n: int, segments: list[Segment]) -> np.ndarray:
    active = np.zeros(n, dtype=bool)
    for seg in segments:
        active[seg.start : seg.end] = True
    return active


def one_hot_activity(active: np.ndarray) -> np.ndarray:
    y = np.zeros((len(active), 2))
    y[np.arange(len(active)), active.astype(int)] = 1.0
    return y


def balance_classes(x, active, rng, worst_share: float = 0.55):
    """Subsample the majority class until its share is at most worst_share."""
    active = np.asarray(active, dtype=bool)
    n_active, n_inactive = int(active.sum()), int((~active).sum())
    majority = active if n_active >= n_inactive else ~active
    n_major, n_minor = max(n_active, n_inactive), min(n_active, n_inactive)
    cap = int(worst_share / (1.0 - worst_share) * n_minor)
    if n_major <= cap:
        return x, active
    major_idx = np.flatnonzero(majority)
    keep = np.sort(rng.choice(major_idx, size=cap, replace=False))
    idx = np.sort(np.concatenate([np.flatnonzero(~majority), keep]))
    return x[idx], active[idx]


@dataclass
class BoundaryTrainReport:
    history: dict
    val_accuracy: float
    test_accuracy: float
    n_train: int
    n_val: int
    n_test: int


def train_boundary_extractor(
    model: ModelGraph,
    x: np.ndarray,
    active: np.ndarray,
    cfg: TrainConfig,
    max_samples: int | None = None,
) -> BoundaryTrainReport:
    """Balance to 55/45, split 60/20/20, train per the shared loop.

    ``max_samples`` caps the balanced dataset (seeded subsample) so desk-
    scale corpora train in minutes; validation and test stay untouched
    fractions of the same cap.
    """
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xB0]))
    x, active = balance_classes(x, active, rng)
    if max_samples is not None and len(x) > max_samples:
        keep = np.sort(rng.choice(len(x), size=max_samples, replace=False))
        x, active = x[keep], active[keep]
    y = one_hot_activity(active)
    idx_train, idx_val, idx_test = split_dataset(np.arange(len(x)), rng=rng)
    history = train(model, (x[idx_train], y[idx_train]), (x[idx_val], y[idx_val]), cfg)

    def accuracy(idx):
        pred = predict_proba_batched(model, x[idx]).argmax(axis=1)
        return float((pred == active[idx].astype(int)).mean())

    return BoundaryTrainReport(
        history, accuracy(idx_val), accuracy(idx_test), len(idx_train), len(idx_val), len(idx_test)
    )


def extract_features(model: ModelGraph, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Final LSTM output per sample; the dense head and dropout are bypassed."""
    outs = [
        model.forward_to(x[i : i + batch_size], FEATURE_LAYER)
        for i in range(0, len(x), batch_size)
    ]
    features = np.concatenate(outs, axis=0)
    assert features.shape[1] == N_FEATURES
    return features


def train_forest(
    features: np.ndarray,
    active: np.ndarray,
    n_estimators: int = 50,
    train_fraction: float = 0.25,
    seed: int = 0,
) -> RandomForest:
    """Fit the activity forest on a random quarter of the feature rows."""
    active = np.asarray(active, dtype=np.int64)
    if len(np.unique(active)) < 2:
        raise DegenerateData("need both active and inactive samples")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xF0]))
    n_keep = max(2, int(round(train_fraction * len(features))))
    keep = np.sort(rng.choice(len(features), size=n_keep, replace=False))
    if len(np.unique(active[keep])) < 2:
        raise DegenerateData("subsample collapsed to a single class")
    return RandomForest.fit(features[keep], active[keep], n_estimators, seed=seed)


def predict_activity(forest: RandomForest, features: np.ndarray) -> np.ndarray:
    """Majority vote per sample; ties resolve to inactive."""
    return forest.predict(features) == ACTIVE


def dense_head_activity(model: ModelGraph, x: np.ndarray) -> np.ndarray:
    """The extractor's own classification head, for comparison runs."""
    return predict_proba_batched(model, x).argmax(axis=1) == ACTIVE


def _runs(values: np.ndarray) -> list[list]:
    """Maximal runs as [value, start, end] triples."""
    edges = np.flatnonzero(np.diff(values.astype(np.int8))) + 1
    bounds = np.concatenate([[0], edges, [len(values)]])
    return [[bool(values[s]), int(s), int(e)] for s, e in zip(bounds[:-1], bounds[1:])]


def clean_activity(
    active: np.ndarray, min_run: int = 5, extend: int = 4, guard: int = 3
) -> np.ndarray:
    """Outlier-flip then extension cleanup of a per-sample activity sequence.

    Rule 1: any interior run shorter than min_run (either polarity,
    flanked on both sides by the opposite value) flips, shortest first,
    until none remain.  Rule 2: every surviving active run is extended by
    up to `extend` samples per side, stopping `guard` samples short of the
    neighbouring active run, processed left to right; extension therefore
    never merges two distinct runs.
    """
    active = np.asarray(active, dtype=bool)
    n = len(active)
    if n == 0:
        return active.copy()
    runs = _runs(active)
    while True:
        flippable = [
            (e - s, i)
            for i, (_, s, e) in enumerate(runs)
            if 0 < i < len(runs) - 1 and e - s < min_run
        ]
        if not flippable:
            break
        _, i = min(flippable)
        runs[i - 1 : i + 2] = [[runs[i - 1][0], runs[i - 1][1], runs[i + 1][2]]]

    actives = [(s, e) for value, s, e in runs if value]
    out = np.zeros(n, dtype=bool)
    prev_end = None
    for i, (s, e) in enumerate(actives):
        new_s = s - extend if i == 0 else max(s - extend, prev_end + guard)
        new_s = min(max(new_s, 0), s)
        new_e = e + extend if i == len(actives) - 1 else min(e + extend, actives[i + 1][0] - guard)
        new_e = max(min(new_e, n), e)
        out[new_s:new_e] = True
        prev_end = new_e
    return out


def segments_from_activity(active: np.ndarray) -> list[Segment]:
    """One segment per maximal active run, in temporal order."""
    return [Segment(s, e) for value, s, e in _runs(np.asarray(active, dtype=bool)) if value]


def merge_to_count(segments: list[Segment], k: int) -> tuple[list[Segment], bool]:
    """Merge closest-gap neighbours until at most k segments remain.

    Returns (segments, short) where short flags an input that had fewer
    than k segments to begin with (nothing can be split to compensate).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    segs = list(segments)
    if len(segs) < k:
        return segs, True
    while len(segs) > k:
        gaps = [segs[i + 1].start - segs[i].end for i in range(len(segs) - 1)]
        i = int(np.argmin(gaps))  # ties: earliest pair
        segs[i : i + 2] = [Segment(segs[i].start, segs[i + 1].end)]
    return segs, False


def short_error_runs(truth: np.ndarray, pred: np.ndarray, max_len: int = 5) -> int:
    """Count of misclassified runs shorter than max_len (isolated flips)."""
    err = np.asarray(truth, dtype=bool) != np.asarray(pred, dtype=bool)
    return sum(1 for value, s, e in _runs(err) if value and e - s < max_len)
