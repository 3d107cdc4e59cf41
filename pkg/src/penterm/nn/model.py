"""Layer stack with shape checking, loss/gradients, and checkpoint files."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .layers import Layer, ShapeMismatch, layer_from_spec

CHECKPOINT_MAGIC = b"PTNN"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or version-mismatched checkpoint file."""


class ModelGraph:
    """An ordered stack of layers with exclusively-owned parameters.

    Shapes are propagated and checked at build time.  The dropout RNG is
    owned by the model and seeded at construction, so a fixed seed makes
    training fully reproducible; inference never touches it.
    """

    def __init__(self, layers: list[Layer], input_shape: tuple, seed: int,
                 l2_rate: float = 0.0, dtype=np.float64):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.l2_rate = l2_rate
        self.dtype = np.dtype(dtype)
        self.shapes = [self.input_shape]
        for layer in layers:
            self.shapes.append(layer.out_shape(self.shapes[-1]))
        children = np.random.SeedSequence(seed).spawn(len(layers) + 1)
        for layer, child, in_shape in zip(layers, children, self.shapes):
            layer.init_params(in_shape, np.random.default_rng(child), self.dtype)
        self.rng = np.random.default_rng(children[-1])  # dropout stream

    @property
    def output_shape(self) -> tuple:
        return self.shapes[-1]

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        return [
            (f"{i}.{name}", p)
            for i, layer in enumerate(self.layers)
            for name, p in layer.params.items()
        ]

    def n_parameters(self) -> int:
        return sum(p.size for _, p in self.parameters())

    def get_state(self) -> dict[str, np.ndarray]:
        return {name: p.copy() for name, p in self.parameters()}

    def clone(self) -> "ModelGraph":
        """Same topology and weights, fresh caches and RNG; the original
        stays untouched by anything done to the copy."""
        twin = ModelGraph(
            [layer_from_spec(layer.spec()) for layer in self.layers],
            self.input_shape,
            self.seed,
            self.l2_rate,
            self.dtype,
        )
        twin.set_state(self.get_state())
        return twin

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters():
            np.copyto(p, state[name])

    def _check_batch(self, x):
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"batch shape {x.shape[1:]}, model expects {self.input_shape}")

    def forward(self, x, train: bool = False) -> list[np.ndarray]:
        """Activations per layer; index 0 is the input batch itself."""
        x = np.asarray(x, dtype=self.dtype)
        self._check_batch(x)
        acts = [x]
        for layer in self.layers:
            acts.append(layer.forward(acts[-1], train=train, rng=self.rng))
        return acts

    def predict_proba(self, x) -> np.ndarray:
        return self.forward(x, train=False)[-1]

    def forward_to(self, x, layer_index: int) -> np.ndarray:
        """Inference output of layers[..layer_index] only (feature taps)."""
        x = np.asarray(x, dtype=self.dtype)
        self._check_batch(x)
        for layer in self.layers[: layer_index + 1]:
            x = layer.forward(x, train=False, rng=self.rng)
        return x

    def backward(self, loss_grad) -> dict[str, np.ndarray]:
        """Gradients for the most recent forward; adds l2 (weights only)."""
        dy = loss_grad
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        grads = {}
        for i, layer in enumerate(self.layers):
            weights = layer.weight_names()
            for name, g in layer.grads.items():
                if self.l2_rate and name in weights:
                    g = g + self.l2_rate * layer.params[name]
                grads[f"{i}.{name}"] = g
        return grads

    def l2_penalty(self) -> float:
        total = 0.0
        for layer in self.layers:
            for name in layer.weight_names():
                total += float((layer.params[name] ** 2).sum())
        return 0.5 * self.l2_rate * total

    def loss_and_grads(self, x, y_onehot, train: bool = True):
        """Mean cross-entropy + l2 penalty and its parameter gradients."""
        acts = self.forward(x, train=train)
        probs = acts[-1]
        y = np.asarray(y_onehot, dtype=self.dtype)
        ce = -np.log(np.maximum((probs * y).sum(axis=1), 1e-300)).mean()
        dlogits = (probs - y) / len(x)  # softmax + cross-entropy pairing
        grads = self.backward(dlogits.astype(self.dtype))
        return float(ce + self.l2_penalty()), grads

    def save(self, path: str | Path) -> None:
        entries = [
            {"name": name, "shape": list(p.shape), "dtype": p.dtype.name}
            for name, p in self.parameters()
        ]
        header = json.dumps(
            {
                "version": CHECKPOINT_VERSION,
                "input_shape": list(self.input_shape),
                "seed": self.seed,
                "l2_rate": self.l2_rate,
                "dtype": self.dtype.name,
                "layers": [layer.spec() for layer in self.layers],
                "params": entries,
            },
            sort_keys=True,
        ).encode("utf-8")
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            for _, p in self.parameters():
                f.write(np.ascontiguousarray(p).tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "ModelGraph":
        blob = Path(path).read_bytes()
        if blob[:4] != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: not a model checkpoint")
        (header_len,) = struct.unpack("<Q", blob[4:12])
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
        if header["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: checkpoint version {header['version']}, expected {CHECKPOINT_VERSION}"
            )
        model = cls(
            [layer_from_spec(s) for s in header["layers"]],
            tuple(header["input_shape"]),
            header["seed"],
            header["l2_rate"],
            np.dtype(header["dtype"]),
        )
        offset = 12 + header_len
        for (name, p), entry in zip(model.parameters(), header["params"]):
            if name != entry["name"] or list(p.shape) != entry["shape"]:
                raise CheckpointError(f"{path}: parameter mismatch at {entry['name']}")
            dt = np.dtype(entry["dtype"])
            nbytes = int(np.prod(entry["shape"])) * dt.itemsize
            data = np.frombuffer(blob[offset : offset + nbytes], dtype=dt).reshape(p.shape)
            np.copyto(p, data)
            offset += nbytes
        if offset != len(blob):
            raise CheckpointError(f"{path}: trailing bytes")
        return model
