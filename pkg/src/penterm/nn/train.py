"""Mini-batch training loop with patience-based early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelGraph
from .optim import adam_init, adam_step


class Diverged(RuntimeError):
    """Training or validation loss became non-finite."""


@dataclass
class TrainConfig:
    batch_size: int = 128
    learning_rate: float = 0.001
    patience: int = 5
    max_epochs: int = 100
    l2_rate: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be >= 1")


class EarlyStopper:
    """Stop once the monitored loss has not improved for `patience` epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.stale = 0

    def update(self, epoch: int, loss: float) -> bool:
        """Record one epoch; returns True when this is a new best."""
        if loss < self.best:
            self.best, self.best_epoch, self.stale = loss, epoch, 0
            return True
        self.stale += 1
        return False

    def should_stop(self) -> bool:
        return self.stale >= self.patience


def split_dataset(items, ratios=(0.6, 0.2, 0.2), rng: np.random.Generator | None = None):
    """Seeded shuffle, then contiguous cuts at round(cumulative ratio * n)."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    rng = rng or np.random.default_rng(0)
    n = len(items)
    order = rng.permutation(n)
    cuts = [int(round(f * n)) for f in np.cumsum(ratios[:-1])]
    pieces = np.split(order, cuts)
    if isinstance(items, np.ndarray):
        return tuple(items[idx] for idx in pieces)
    return tuple([items[i] for i in idx] for idx in pieces)


def predict_proba_batched(model: ModelGraph, x, batch_size: int = 4096) -> np.ndarray:
    outs = [model.predict_proba(x[i : i + batch_size]) for i in range(0, len(x), batch_size)]
    return np.concatenate(outs, axis=0)


def data_loss(model: ModelGraph, x, y_onehot, batch_size: int = 4096) -> float:
    """Mean cross-entropy without the l2 term (the early-stopping signal)."""
    total = 0.0
    for i in range(0, len(x), batch_size):
        probs = model.predict_proba(x[i : i + batch_size])
        y = y_onehot[i : i + batch_size]
        total += -np.log(np.maximum((probs * y).sum(axis=1), 1e-300)).sum()
    return float(total / len(x))


def train(model: ModelGraph, train_xy, val_xy, cfg: TrainConfig) -> dict:
    """Train with Adam; restores the best-validation-loss weights at the end.

    Batches are reshuffled every epoch from a generator seeded by cfg.seed,
    so a rerun with identical inputs reproduces the history bit for bit.
    """
    x_train, y_train = train_xy
    x_val, y_val = val_xy
    if len(x_train) == 0 or len(x_val) == 0:
        raise ValueError("train and validation splits must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    names_params = model.parameters()
    params = [p for _, p in names_params]
    state = adam_init(params)
    stopper = EarlyStopper(cfg.patience)
    best_state = model.get_state()
    history = {"train_loss": [], "val_loss": []}

    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(x_train))
        epoch_loss = 0.0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            loss, grads = model.loss_and_grads(x_train[idx], y_train[idx], train=True)
            if not math.isfinite(loss):
                raise Diverged(f"non-finite training loss at epoch {epoch}")
            adam_step(params, [grads[n] for n, _ in names_params], state, cfg.learning_rate)
            epoch_loss += loss * len(idx)
        history["train_loss"].append(epoch_loss / len(order))

        val_loss = data_loss(model, x_val, y_val)
        if not math.isfinite(val_loss):
            raise Diverged(f"non-finite validation loss at epoch {epoch}")
        history["val_loss"].append(val_loss)
        if stopper.update(epoch, val_loss):
            best_state = model.get_state()
        if stopper.should_stop():
            break

    model.set_state(best_state)
    history["best_epoch"] = stopper.best_epoch
    history["epochs_run"] = len(history["val_loss"])
    return history
