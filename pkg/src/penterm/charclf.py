"""15-class windowed character classifier and few-shot writer adaptation.

Windows cut from splitter-accepted segments train a conv+LSTM network;
per-segment predictions average the window softmax vectors.  For an
unknown writer, five labelled terms are segmented with the boundary
models, aligned to their labels, and used to fine-tune a copy of the
classifier.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .boundary import (
    clean_activity,
    extract_features,
    merge_to_count,
    predict_activity,
    samples_as_batch,
    segments_from_activity,
)
from .data import N_CHANNELS, N_CLASSES, CharClass, Recording, Segment, char_to_class
from .forest import RandomForest
from .metrics import confusion_matrix, macro_f1, per_class_f1
from .nn import (
    Conv2D,
    Dense,
    Dropout,
    LSTM,
    MaxPool,
    ModelGraph,
    Reshape,
    TrainConfig,
    predict_proba_batched,
    split_dataset,
    train,
)
from .preprocess import Window, make_windows

POOLED_STEPS = 5  # 16 -> conv 13 -> conv 10 -> pool 5


class NoWindows(ValueError):
    """A segment too short to produce any window cannot be classified."""


class NoAdaptationWindows(ValueError):
    """None of the adaptation terms yielded a usable labelled window."""


def build_char_classifier(seed: int, l2_rate: float = 0.01, dtype=np.float64) -> ModelGraph:
    """Window classifier: time-axis [4,1] convolutions, [2,1] pooling, LSTM."""
    return ModelGraph(
        [
            Conv2D((4, 1), 32),
            Conv2D((4, 1), 64),
            MaxPool((2, 1)),
            Reshape((POOLED_STEPS, N_CHANNELS * 64)),  # pooled steps as LSTM sequence
            LSTM(128, return_last=True),
            Dropout(0.5),
            Dense(N_CLASSES, "softmax"),
        ],
        input_shape=(16, N_CHANNELS, 1),
        seed=seed,
        l2_rate=l2_rate,
        dtype=dtype,
    )


def windows_from_segments(
    rec: Recording, segments: list[tuple[Segment, CharClass]]
) -> list[Window]:
    """Labelled windows of a prepared recording's accepted segments."""
    out: list[Window] = []
    for seg, c in segments:
        out.extend(make_windows(rec.channels[seg.start : seg.end], rec.rec_id, seg, c))
    return out


def windows_dataset(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    x = np.stack([w.values for w in windows]).reshape(-1, 16, N_CHANNELS, 1)
    y = np.array([w.char.class_index for w in windows], dtype=np.int64)
    return x, y


def one_hot_classes(y: np.ndarray) -> np.ndarray:
    return np.eye(N_CLASSES)[y]


@dataclass
class CharTrainReport:
    history: dict
    test_macro_f1: float
    test_per_class_f1: list[float]
    confusion: np.ndarray
    n_train: int
    n_val: int
    n_test: int


def train_character_classifier(
    x: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> tuple[ModelGraph, CharTrainReport]:
    """60/20/20 split, shared training loop, macro F1 on the test split."""
    model = build_char_classifier(cfg.seed, cfg.l2_rate)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xC0]))
    idx_train, idx_val, idx_test = split_dataset(np.arange(len(x)), rng=rng)
    onehot = one_hot_classes(y)
    history = train(
        model, (x[idx_train], onehot[idx_train]), (x[idx_val], onehot[idx_val]), cfg
    )
    pred = predict_proba_batched(model, x[idx_test]).argmax(axis=1)
    report = CharTrainReport(
        history=history,
        test_macro_f1=macro_f1(y[idx_test], pred, N_CLASSES),
        test_per_class_f1=per_class_f1(y[idx_test], pred, N_CLASSES).tolist(),
        confusion=confusion_matrix(y[idx_test], pred, N_CLASSES),
        n_train=len(idx_train),
        n_val=len(idx_val),
        n_test=len(idx_test),
    )
    return model, report


@dataclass
class SegmentPrediction:
    segment: Segment | None
    window_probs: np.ndarray  # (n_windows, 15)
    class_index: int
    confidence: float

    @property
    def glyph(self) -> str:
        from .data import class_to_char

        return class_to_char(self.class_index).glyph


def predict_segment(model: ModelGraph, windows: list[Window]) -> SegmentPrediction:
    """Mean of the window softmax vectors; argmax ties go to the lower class."""
    if not windows:
        raise NoWindows("segment produced no windows")
    x = np.stack([w.values for w in windows]).reshape(-1, 16, N_CHANNELS, 1)
    probs = model.predict_proba(x)
    mean = probs.mean(axis=0)
    return SegmentPrediction(
        segment=windows[0].source[1],
        window_probs=probs,
        class_index=int(mean.argmax()),
        confidence=float(mean.max()),
    )


@dataclass
class AdaptReport:
    n_windows: int
    skipped_terms: list[str] = field(default_factory=list)
    history: dict = field(default_factory=dict)


def adaptation_windows(
    terms: list[Recording],
    extractor: ModelGraph,
    forest: RandomForest,
    min_run: int = 5,
    extend: int = 4,
    guard: int = 3,
) -> tuple[list[Window], list[str]]:
    """Label-aligned windows for adaptation terms segmented by the boundary stack.

    Terms whose cleaned activity yields fewer segments than label characters
    cannot be aligned and are skipped.
    """
    windows: list[Window] = []
    skipped: list[str] = []
    for rec in terms:
        features = extract_features(extractor, samples_as_batch(rec))
        active = clean_activity(predict_activity(forest, features), min_run, extend, guard)
        segments = segments_from_activity(active)
        merged, short = merge_to_count(segments, len(rec.label))
        if short:
            skipped.append(rec.rec_id)
            continue
        for seg, glyph in zip(merged, rec.label):
            c = char_to_class(glyph)
            windows.extend(
                make_windows(rec.channels[seg.start : seg.end], rec.rec_id, seg, c)
            )
    return windows, skipped


def adapt_to_writer(
    model: ModelGraph,
    terms: list[Recording],
    extractor: ModelGraph,
    forest: RandomForest,
    seed: int = 0,
    learning_rate: float = 0.001,
    max_epochs: int = 20,
    patience: int = 3,
) -> tuple[ModelGraph, AdaptReport]:
    """Fine-tune a copy of the classifier on five labelled terms.

    The base model is never mutated; topology and parameter count are
    unchanged, so the adapted copy still scores all 15 classes even when
    the adaptation labels cover only a few.
    """
    if len(terms) != 5:
        raise ValueError(f"adaptation expects exactly 5 labelled terms, got {len(terms)}")
    if any(rec.label is None for rec in terms):
        raise ValueError("adaptation terms must be labelled")
    windows, skipped = adaptation_windows(terms, extractor, forest)
    for rec_id in skipped:
        warnings.warn(f"adaptation term {rec_id}: fewer segments than characters, skipped")
    if not windows:
        raise NoAdaptationWindows("all adaptation terms were unusable")
    x, y = windows_dataset(windows)
    onehot = one_hot_classes(y)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAD]))
    order = rng.permutation(len(x))
    n_val = max(1, int(round(0.2 * len(x))))
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = val_idx
    adapted = model.clone()
    cfg = TrainConfig(
        batch_size=32,
        learning_rate=learning_rate,
        patience=patience,
        max_epochs=max_epochs,
        l2_rate=model.l2_rate,
        seed=seed,
    )
    history = train(
        adapted, (x[train_idx], onehot[train_idx]), (x[val_idx], onehot[val_idx]), cfg
    )
    return adapted, AdaptReport(len(windows), skipped, history)


def five_fold_f1(x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> list[float]:
    """Macro F1 of five held-out folds; each fold trains a fresh model."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5F]))
    folds = np.array_split(rng.permutation(len(x)), 5)
    scores = []
    for k, held in enumerate(folds):
        rest = np.concatenate([f for i, f in enumerate(folds) if i != k])
        n_val = max(1, int(round(0.2 * len(rest))))
        val_idx, train_idx = rest[:n_val], rest[n_val:]
        fold_cfg = TrainConfig(
            batch_size=cfg.batch_size,
            learning_rate=cfg.learning_rate,
            patience=cfg.patience,
            max_epochs=cfg.max_epochs,
            l2_rate=cfg.l2_rate,
            seed=cfg.seed + k + 1,
        )
        model = build_char_classifier(fold_cfg.seed, fold_cfg.l2_rate)
        onehot = one_hot_classes(y)
        train(model, (x[train_idx], onehot[train_idx]), (x[val_idx], onehot[val_idx]), fold_cfg)
        pred = predict_proba_batched(model, x[held]).argmax(axis=1)
        scores.append(macro_f1(y[held], pred, N_CLASSES))
    return scores
