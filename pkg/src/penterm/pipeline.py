"""End-to-end orchestration: splitting, training, term prediction, simulation.

The simulation mirrors the evaluation protocol: hold one writer out,
train everything on the rest, adapt the character classifier on five of
the held-out writer's labelled terms, then score the remaining terms by
Levenshtein distance against their labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import boundary as bd
from . import charclf as cc
from .config import PipelineConfig
from .data import Recording
from .forest import RandomForest
from .metrics import binary_f1, levenshtein
from .nn import ModelGraph, TrainConfig
from .preprocess import make_windows, prepare
from .split import (
    SplitParams,
    SplitRejected,
    StrokeCountProfile,
    corpus_yield,
    infer_profile,
    split_term,
)


class InsufficientData(ValueError):
    """Not enough writers or terms for the requested protocol."""


def split_params(cfg: PipelineConfig) -> SplitParams:
    s = cfg.split
    return SplitParams(
        s.force_threshold, s.min_stroke_len, s.merge_gap, s.min_votes, s.agreement
    )


@dataclass
class SplitOutcome:
    writer_id: str
    rec_id: str
    accepted: bool
    reason: str = ""


@dataclass
class CorpusSplit:
    """Prepared recordings, per-writer profiles, and accepted segmentations."""

    prepared: dict[str, list[Recording]]
    profiles: dict[str, StrokeCountProfile]
    accepted: dict[str, list[tuple[Recording, list]]]
    outcomes: list[SplitOutcome]

    @property
    def yield_fraction(self) -> float:
        return corpus_yield([o.accepted for o in self.outcomes])


def split_corpus(corpus: dict[str, list[Recording]], cfg: PipelineConfig) -> CorpusSplit:
    """Prepare every recording, infer writer profiles, split labelled terms."""
    params = split_params(cfg)
    period = cfg.preprocess.resample_period_ms
    prepared = {w: [prepare(r, period) for r in recs] for w, recs in corpus.items()}
    profiles, accepted, outcomes = {}, {}, []
    for writer in sorted(prepared):
        recs = [r for r in prepared[writer] if r.label]
        profiles[writer] = infer_profile(writer, recs, params)
        kept = []
        for rec in recs:
            try:
                segments = split_term(rec, rec.label, profiles[writer], params)
            except SplitRejected as e:
                outcomes.append(SplitOutcome(writer, rec.rec_id, False, e.reason))
                continue
            outcomes.append(SplitOutcome(writer, rec.rec_id, True))
            kept.append((rec, segments))
        accepted[writer] = kept
    return CorpusSplit(prepared, profiles, accepted, outcomes)


def boundary_dataset(split: CorpusSplit) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample rows and activity labels from the accepted recordings."""
    xs, ys = [], []
    for writer in sorted(split.accepted):
        for rec, segments in split.accepted[writer]:
            xs.append(bd.samples_as_batch(rec))
            ys.append(bd.activity_from_segments(len(rec), [s for s, _ in segments]))
    if not xs:
        raise InsufficientData("no accepted recordings to train on")
    return np.concatenate(xs), np.concatenate(ys)


def charclf_dataset(split: CorpusSplit) -> tuple[np.ndarray, np.ndarray]:
    windows = []
    for writer in sorted(split.accepted):
        for rec, segments in split.accepted[writer]:
            windows.extend(cc.windows_from_segments(rec, segments))
    if not windows:
        raise InsufficientData("no windows to train on")
    return cc.windows_dataset(windows)


@dataclass
class BoundaryStack:
    extractor: ModelGraph
    forest: RandomForest
    report: bd.BoundaryTrainReport


def train_boundary_stack(
    x: np.ndarray, active: np.ndarray, cfg: PipelineConfig
) -> BoundaryStack:
    b = cfg.boundary
    seed = cfg.stage_seed("boundary")
    extractor = bd.build_boundary_extractor(seed, b.l2_rate, np.dtype(b.dtype))
    train_cfg = TrainConfig(
        batch_size=b.batch_size,
        learning_rate=b.learning_rate,
        patience=b.patience,
        max_epochs=b.max_epochs,
        l2_rate=b.l2_rate,
        seed=seed,
    )
    report = bd.train_boundary_extractor(extractor, x, active, train_cfg, b.max_train_samples)
    # The forest sees the same training distribution through the extractor's
    # final recurrent layer; a random quarter of the rows is kept.
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFE]))
    n_fit = min(len(x), b.max_train_samples)
    fit_idx = np.sort(rng.choice(len(x), size=n_fit, replace=False))
    features = bd.extract_features(extractor, x[fit_idx])
    forest = bd.train_forest(
        features, active[fit_idx], b.n_estimators, b.train_fraction, seed
    )
    return BoundaryStack(extractor, forest, report)


def predict_term(
    rec: Recording,
    extractor: ModelGraph,
    forest: RandomForest,
    char_model: ModelGraph,
    cfg: PipelineConfig,
    activity: np.ndarray | None = None,
) -> str:
    """Resample, normalize, segment by predicted activity, classify segments.

    Segments too short for a window are dropped; a recording with no
    surviving segments predicts the empty string.
    """
    b = cfg.boundary
    prepared = prepare(rec, cfg.preprocess.resample_period_ms)
    if activity is None:
        features = bd.extract_features(extractor, bd.samples_as_batch(prepared))
        activity = bd.predict_activity(forest, features)
    cleaned = bd.clean_activity(activity, b.min_run, b.extend, b.guard)
    glyphs = []
    for seg in bd.segments_from_activity(cleaned):
        windows = make_windows(
            prepared.channels[seg.start : seg.end],
            prepared.rec_id,
            seg,
            size=cfg.preprocess.window_size,
            stride=cfg.preprocess.window_stride,
        )
        if not windows:
            continue
        glyphs.append(cc.predict_segment(char_model, windows).glyph)
    return "".join(glyphs)


@dataclass
class TermResult:
    rec_id: str
    truth: str
    predicted: str
    distance: int
    predicted_unadapted: str
    distance_unadapted: int


@dataclass
class SimulationReport:
    held_out_writer: str
    terms: list[TermResult]
    mean_levenshtein: float
    total_levenshtein: int
    mean_levenshtein_unadapted: float
    boundary_f1: float
    boundary_val_accuracy: float
    boundary_test_accuracy: float
    charclf_macro_f1: float
    charclf_history: dict
    yield_fraction: float
    forest_short_error_runs: int
    dense_short_error_runs: int
    adaptation_windows: int
    adaptation_skipped: list[str]
    seed: int
    config: dict

    def to_dict(self) -> dict:
        return {
            "held_out_writer": self.held_out_writer,
            "terms": [vars(t) for t in self.terms],
            "mean_levenshtein": self.mean_levenshtein,
            "total_levenshtein": self.total_levenshtein,
            "mean_levenshtein_unadapted": self.mean_levenshtein_unadapted,
            "boundary_f1": self.boundary_f1,
            "boundary_val_accuracy": self.boundary_val_accuracy,
            "boundary_test_accuracy": self.boundary_test_accuracy,
            "charclf_macro_f1": self.charclf_macro_f1,
            "charclf_history": self.charclf_history,
            "yield_fraction": self.yield_fraction,
            "forest_short_error_runs": self.forest_short_error_runs,
            "dense_short_error_runs": self.dense_short_error_runs,
            "adaptation_windows": self.adaptation_windows,
            "adaptation_skipped": self.adaptation_skipped,
            "seed": self.seed,
            "config": self.config,
        }


def truth_activity(rec: Recording) -> np.ndarray:
    if rec.truth_segments is None:
        raise InsufficientData(f"recording {rec.rec_id} has no ground-truth segments")
    return bd.activity_from_segments(len(rec), [s for s, _ in rec.truth_segments])


def heldout_boundary_metrics(
    prepared: list[Recording], stack: BoundaryStack
) -> tuple[float, int, int]:
    """Per-sample F1 plus short-error-run counts (forest vs dense head)."""
    truths, forest_preds, dense_preds = [], [], []
    for rec in prepared:
        x = bd.samples_as_batch(rec)
        features = bd.extract_features(stack.extractor, x)
        truths.append(truth_activity(rec))
        forest_preds.append(bd.predict_activity(stack.forest, features))
        dense_preds.append(bd.dense_head_activity(stack.extractor, x))
    forest_runs = sum(
        bd.short_error_runs(t, p) for t, p in zip(truths, forest_preds)
    )
    dense_runs = sum(bd.short_error_runs(t, p) for t, p in zip(truths, dense_preds))
    f1 = binary_f1(np.concatenate(truths), np.concatenate(forest_preds))
    return f1, forest_runs, dense_runs


def run_simulation(
    corpus: dict[str, list[Recording]], cfg: PipelineConfig, adapt: bool = True
) -> SimulationReport:
    """Hold out one writer, train on the rest, adapt on 5 terms, score the rest."""
    writers = sorted(corpus)
    if len(writers) < 2:
        raise InsufficientData("simulation needs at least two writers")
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x51]))
    held_out = writers[int(rng.integers(len(writers)))]
    n_adapt = cfg.adapt.n_terms
    held_recs = [r for r in corpus[held_out] if r.label]
    if len(held_recs) < n_adapt + 1:
        raise InsufficientData(
            f"held-out writer {held_out} has {len(held_recs)} terms, needs > {n_adapt}"
        )

    training_corpus = {w: corpus[w] for w in writers if w != held_out}
    split = split_corpus(training_corpus, cfg)
    x_b, y_b = boundary_dataset(split)
    stack = train_boundary_stack(x_b, y_b, cfg)

    period = cfg.preprocess.resample_period_ms
    held_prepared = [prepare(r, period) for r in held_recs]
    boundary_f1, forest_runs, dense_runs = heldout_boundary_metrics(held_prepared, stack)

    x_c, y_c = charclf_dataset(split)
    c = cfg.charclf
    char_cfg = TrainConfig(
        batch_size=c.batch_size,
        learning_rate=c.learning_rate,
        patience=c.patience,
        max_epochs=c.max_epochs,
        l2_rate=c.l2_rate,
        seed=cfg.stage_seed("charclf"),
    )
    char_model, char_report = cc.train_character_classifier(x_c, y_c, char_cfg)

    order = rng.permutation(len(held_recs))
    adapt_recs = [held_prepared[i] for i in order[:n_adapt]]
    eval_indices = sorted(order[n_adapt:])
    adapt_report = cc.AdaptReport(0)
    eval_model = char_model
    if adapt:
        eval_model, adapt_report = cc.adapt_to_writer(
            char_model,
            adapt_recs,
            stack.extractor,
            stack.forest,
            seed=cfg.stage_seed("adapt"),
            learning_rate=cfg.adapt.learning_rate,
            max_epochs=cfg.adapt.max_epochs,
            patience=cfg.adapt.patience,
        )

    terms = []
    for i in eval_indices:
        rec = held_recs[i]
        pred_base = predict_term(rec, stack.extractor, stack.forest, char_model, cfg)
        pred = (
            predict_term(rec, stack.extractor, stack.forest, eval_model, cfg)
            if adapt
            else pred_base
        )
        terms.append(
            TermResult(
                rec.rec_id,
                rec.label,
                pred,
                levenshtein(pred, rec.label),
                pred_base,
                levenshtein(pred_base, rec.label),
            )
        )

    total = sum(t.distance for t in terms)
    return SimulationReport(
        held_out_writer=held_out,
        terms=terms,
        mean_levenshtein=total / len(terms),
        total_levenshtein=total,
        mean_levenshtein_unadapted=sum(t.distance_unadapted for t in terms) / len(terms),
        boundary_f1=boundary_f1,
        boundary_val_accuracy=stack.report.val_accuracy,
        boundary_test_accuracy=stack.report.test_accuracy,
        charclf_macro_f1=char_report.test_macro_f1,
        charclf_history=char_report.history,
        yield_fraction=split.yield_fraction,
        forest_short_error_runs=forest_runs,
        dense_short_error_runs=dense_runs,
        adaptation_windows=adapt_report.n_windows,
        adaptation_skipped=adapt_report.skipped_terms,
        seed=cfg.seed,
        config=cfg.to_dict(),
    )
