"""Random forest over axis-aligned Gini splits, built from scratch.

Trees grow until leaves are pure (or no sampled feature separates the
rows); each tree sees a bootstrap of the training rows and sqrt(d)
random features per node.  Everything is seeded, so two fits from the
same seed produce identical tree structures.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FOREST_MAGIC = b"PTRF"
FOREST_VERSION = 1


class ForestCheckpointError(ValueError):
    """Unreadable or version-mismatched forest file."""


@dataclass
class DecisionTree:
    """Flat array representation: feature < 0 marks a leaf."""

    feature: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    threshold: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))
    left: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    right: np.ndarray = field(default_factory=lambda: np.empty(0, np.int32))
    counts: np.ndarray = field(default_factory=lambda: np.empty((0, 0), np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_class(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(len(x), dtype=np.int32)
        while True:
            f = self.feature[node]
            active = f >= 0
            if not active.any():
                break
            rows = np.flatnonzero(active)
            goes_left = x[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(
                goes_left, self.left[node[rows]], self.right[node[rows]]
            )
        return np.argmax(self.counts[node], axis=1)


def _gini_best_split(x, y, features, n_classes):
    """Best (feature, threshold, weighted impurity) among candidate features."""
    n = len(y)
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0
    best = (np.inf, -1, 0.0)
    for f in features:
        values = x[:, f]
        order = np.argsort(values, kind="stable")
        v = values[order]
        cum = np.cumsum(onehot[order], axis=0)
        cut = np.flatnonzero(v[:-1] < v[1:])  # split between distinct values
        if len(cut) == 0:
            continue
        n_left = cut + 1.0
        n_right = n - n_left
        left_counts = cum[cut]
        right_counts = cum[-1] - left_counts
        gini_left = n_left - (left_counts**2).sum(axis=1) / n_left
        gini_right = n_right - (right_counts**2).sum(axis=1) / n_right
        weighted = gini_left + gini_right  # common factor 1/n dropped
        k = int(np.argmin(weighted))
        if weighted[k] < best[0]:
            best = (float(weighted[k]), int(f), float((v[cut[k]] + v[cut[k] + 1]) / 2))
    return best


def fit_tree(x, y, n_classes: int, rng: np.random.Generator,
             max_features: int | None = None) -> DecisionTree:
    n, d = x.shape
    m = max_features or max(1, int(np.ceil(np.sqrt(d))))
    feature, threshold, left, right, counts = [], [], [], [], []
    stack = [(np.arange(n), -1, False)]  # (rows, parent, is_right)
    while stack:
        rows, parent, is_right = stack.pop()
        idx = len(feature)
        if parent >= 0:
            (right if is_right else left)[parent] = idx
        tally = np.bincount(y[rows], minlength=n_classes).astype(np.int64)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(tally)
        if (tally > 0).sum() <= 1:
            continue  # pure leaf
        candidates = rng.choice(d, size=min(m, d), replace=False)
        _, f, thr = _gini_best_split(x[rows], y[rows], candidates, n_classes)
        if f < 0:
            continue  # sampled features cannot separate these rows
        goes_left = x[rows, f] <= thr
        feature[idx] = f
        threshold[idx] = thr
        # Right child is pushed first so the left subtree is built first.
        stack.append((rows[~goes_left], idx, True))
        stack.append((rows[goes_left], idx, False))
    return DecisionTree(
        np.asarray(feature, np.int32),
        np.asarray(threshold, np.float64),
        np.asarray(left, np.int32),
        np.asarray(right, np.int32),
        np.vstack(counts),
    )


@dataclass
class RandomForest:
    n_classes: int
    n_features: int
    trees: list[DecisionTree] = field(default_factory=list)

    @classmethod
    def fit(cls, x, y, n_estimators: int = 50, seed: int = 0,
            max_features: int | None = None) -> "RandomForest":
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        n_classes = int(y.max()) + 1
        forest = cls(n_classes, x.shape[1])
        for child in np.random.SeedSequence(seed).spawn(n_estimators):
            rng = np.random.default_rng(child)
            rows = rng.integers(0, len(x), len(x))  # bootstrap
            forest.trees.append(fit_tree(x[rows], y[rows], n_classes, rng, max_features))
        return forest

    def vote_counts(self, x) -> np.ndarray:
        """Per-sample class votes, one vote per tree; invariant to tree order."""
        x = np.asarray(x, dtype=np.float64)
        votes = np.zeros((len(x), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            pred = tree.predict_class(x)
            votes[np.arange(len(x)), pred] += 1
        return votes

    def predict(self, x) -> np.ndarray:
        """Majority vote; ties resolve to the lowest class index."""
        return np.argmax(self.vote_counts(x), axis=1)

    def save(self, path: str | Path) -> None:
        header = json.dumps(
            {
                "version": FOREST_VERSION,
                "n_classes": self.n_classes,
                "n_features": self.n_features,
                "trees": [t.n_nodes for t in self.trees],
            },
            sort_keys=True,
        ).encode("utf-8")
        with open(path, "wb") as f:
            f.write(FOREST_MAGIC)
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            for t in self.trees:
                for arr in (t.feature, t.threshold, t.left, t.right, t.counts):
                    f.write(np.ascontiguousarray(arr).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "RandomForest":
        blob = Path(path).read_bytes()
        if blob[:4] != FOREST_MAGIC:
            raise ForestCheckpointError(f"{path}: not a forest checkpoint")
        (header_len,) = struct.unpack("<Q", blob[4:12])
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
        if header["version"] != FOREST_VERSION:
            raise ForestCheckpointError(
                f"{path}: forest version {header['version']}, expected {FOREST_VERSION}"
            )
        forest = cls(header["n_classes"], header["n_features"])
        offset = 12 + header_len
        for n_nodes in header["trees"]:
            tree = DecisionTree()
            for name, dt, shape in (
                ("feature", np.int32, (n_nodes,)),
                ("threshold", np.float64, (n_nodes,)),
                ("left", np.int32, (n_nodes,)),
                ("right", np.int32, (n_nodes,)),
                ("counts", np.int64, (n_nodes, header["n_classes"])),
            ):
                nbytes = int(np.prod(shape)) * np.dtype(dt).itemsize
                setattr(
                    tree, name,
                    np.frombuffer(blob[offset : offset + nbytes], dtype=dt).reshape(shape).copy(),
                )
                offset += nbytes
            forest.trees.append(tree)
        if offset != len(blob):
            raise ForestCheckpointError(f"{path}: trailing bytes")
        return forest
