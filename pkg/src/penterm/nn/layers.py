"""Network layers with explicit forward/backward passes.

Conventions: batches lead every array. Images are (B, H, W, C), sequences
(B, T, D), vectors (B, D). Convolutions use valid padding only and carry
their ReLU; the final Dense layer's softmax pairs with the cross-entropy
loss, so its backward expects the gradient w.r.t. logits (probs - target).
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    """Layer input shape incompatible with the layer's contract."""


def _fan_in_uniform(rng, shape, fan_in, dtype):
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, shape).astype(dtype)


class Layer:
    """Base: parameter dict, gradient dict, shape algebra, (de)serialization."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def out_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def init_params(self, in_shape: tuple, rng: np.random.Generator, dtype) -> None:
        pass

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    def weight_names(self) -> tuple[str, ...]:
        """Parameters the l2 penalty applies to (weights, never biases)."""
        return tuple(name for name, p in self.params.items() if p.ndim >= 2)


class Dense(Layer):
    """Fully connected layer, optionally with relu or softmax activation."""

    def __init__(self, units: int, activation: str | None = None):
        super().__init__()
        if units < 1:
            raise ShapeMismatch("units must be >= 1")
        if activation not in (None, "relu", "softmax"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.units = units
        self.activation = activation

    def out_shape(self, in_shape):
        if len(in_shape) != 1:
            raise ShapeMismatch(f"Dense expects a flat input, got {in_shape}")
        return (self.units,)

    def init_params(self, in_shape, rng, dtype):
        d = in_shape[0]
        self.params = {
            "W": _fan_in_uniform(rng, (d, self.units), d, dtype),
            "b": np.zeros(self.units, dtype=dtype),
        }

    def forward(self, x, train=False, rng=None):
        self._x = x
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            self._mask = z > 0
            return np.where(self._mask, z, 0.0)
        if self.activation == "softmax":
            z = z - z.max(axis=1, keepdims=True)
            e = np.exp(z)
            return e / e.sum(axis=1, keepdims=True)
        return z

    def backward(self, dy):
        # softmax: dy must already be dL/dlogits (cross-entropy pairing)
        dz = dy * self._mask if self.activation == "relu" else dy
        self.grads = {"W": self._x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T

    def spec(self):
        return {"kind": "dense", "units": self.units, "activation": self.activation}


class Conv2D(Layer):
    """Valid 2-D convolution with built-in ReLU, via im2col + GEMM."""

    def __init__(self, kernel: tuple[int, int], filters: int):
        super().__init__()
        kh, kw = kernel
        if kh < 1 or kw < 1 or filters < 1:
            raise ShapeMismatch("kernel extents and filter count must be >= 1")
        self.kh, self.kw, self.filters = kh, kw, filters

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"Conv2D expects (H, W, C), got {in_shape}")
        h, w, _ = in_shape
        if h < self.kh or w < self.kw:
            raise ShapeMismatch(f"kernel ({self.kh}, {self.kw}) larger than input {in_shape}")
        return (h - self.kh + 1, w - self.kw + 1, self.filters)

    def init_params(self, in_shape, rng, dtype):
        c = in_shape[2]
        fan_in = self.kh * self.kw * c
        self.params = {
            "W": _fan_in_uniform(rng, (self.kh, self.kw, c, self.filters), fan_in, dtype),
            "b": np.zeros(self.filters, dtype=dtype),
        }

    def forward(self, x, train=False, rng=None):
        self._in_shape = x.shape
        view = np.lib.stride_tricks.sliding_window_view(x, (self.kh, self.kw), axis=(1, 2))
        # (B, H', W', C, kh, kw) -> (B, H', W', kh, kw, C)
        cols = np.ascontiguousarray(view.transpose(0, 1, 2, 4, 5, 3))
        b, hp, wp = cols.shape[:3]
        self._cols = cols.reshape(b * hp * wp, -1)
        w = self.params["W"].reshape(-1, self.filters)
        z = (self._cols @ w + self.params["b"]).reshape(b, hp, wp, self.filters)
        self._mask = z > 0
        return np.where(self._mask, z, 0.0)

    def backward(self, dy):
        dz = dy * self._mask
        b, hp, wp, f = dz.shape
        dz_flat = dz.reshape(-1, f)
        self.grads = {
            "W": (self._cols.T @ dz_flat).reshape(self.params["W"].shape),
            "b": dz_flat.sum(axis=0),
        }
        dcols = (dz_flat @ self.params["W"].reshape(-1, f).T).reshape(
            b, hp, wp, self.kh, self.kw, -1
        )
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                dx[:, i : i + hp, j : j + wp, :] += dcols[:, :, :, i, j, :]
        return dx

    def spec(self):
        return {"kind": "conv2d", "kernel": [self.kh, self.kw], "filters": self.filters}


class MaxPool(Layer):
    """Non-overlapping max pooling; trailing remainder rows/columns are cropped."""

    def __init__(self, pool: tuple[int, int]):
        super().__init__()
        self.ph, self.pw = pool
        if self.ph < 1 or self.pw < 1:
            raise ShapeMismatch("pool extents must be >= 1")

    def out_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeMismatch(f"MaxPool expects (H, W, C), got {in_shape}")
        h, w, c = in_shape
        if h < self.ph or w < self.pw:
            raise ShapeMismatch(f"pool ({self.ph}, {self.pw}) larger than input {in_shape}")
        return (h // self.ph, w // self.pw, c)

    def forward(self, x, train=False, rng=None):
        b, h, w, c = x.shape
        hp, wp = h // self.ph, w // self.pw
        self._in_shape = x.shape
        tiles = x[:, : hp * self.ph, : wp * self.pw, :]
        tiles = tiles.reshape(b, hp, self.ph, wp, self.pw, c).transpose(0, 1, 3, 5, 2, 4)
        flat = tiles.reshape(b, hp, wp, c, self.ph * self.pw)
        self._argmax = flat.argmax(axis=-1)  # first max wins on ties
        return np.take_along_axis(flat, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        b, hp, wp, c = dy.shape
        flat = np.zeros((b, hp, wp, c, self.ph * self.pw), dtype=dy.dtype)
        np.put_along_axis(flat, self._argmax[..., None], dy[..., None], axis=-1)
        tiles = flat.reshape(b, hp, wp, c, self.ph, self.pw).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros(self._in_shape, dtype=dy.dtype)
        dx[:, : hp * self.ph, : wp * self.pw, :] = tiles.reshape(
            b, hp * self.ph, wp * self.pw, c
        )
        return dx

    def spec(self):
        return {"kind": "maxpool", "pool": [self.ph, self.pw]}


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LSTM(Layer):
    """Single LSTM layer; gate order (input, forget, candidate, output).

    Forget-gate bias starts at 1 so early training does not erase state.
    ``return_last`` yields the final hidden state, else the full sequence.
    """

    def __init__(self, units: int, return_last: bool = True):
        super().__init__()
        if units < 1:
            raise ShapeMismatch("units must be >= 1")
        self.units = units
        self.return_last = return_last

    def out_shape(self, in_shape):
        if len(in_shape) != 2:
            raise ShapeMismatch(f"LSTM expects (T, D), got {in_shape}")
        t, _ = in_shape
        return (self.units,) if self.return_last else (t, self.units)

    def init_params(self, in_shape, rng, dtype):
        _, d = in_shape
        u = self.units
        b = np.zeros(4 * u, dtype=dtype)
        b[u : 2 * u] = 1.0  # forget gate
        self.params = {
            "W": _fan_in_uniform(rng, (d, 4 * u), d, dtype),
            "R": _fan_in_uniform(rng, (u, 4 * u), u, dtype),
            "b": b,
        }

    def forward(self, x, train=False, rng=None):
        b, t, _ = x.shape
        u = self.units
        w, r, bias = self.params["W"], self.params["R"], self.params["b"]
        h = np.zeros((b, u), dtype=x.dtype)
        c = np.zeros((b, u), dtype=x.dtype)
        self._x = x
        self._cache = []
        hs = np.empty((b, t, u), dtype=x.dtype)
        for step in range(t):
            z = x[:, step] @ w + h @ r + bias
            i = _sigmoid(z[:, :u])
            f = _sigmoid(z[:, u : 2 * u])
            g = np.tanh(z[:, 2 * u : 3 * u])
            o = _sigmoid(z[:, 3 * u :])
            c_prev, h_prev = c, h
            c = f * c_prev + i * g
            tanh_c = np.tanh(c)
            h = o * tanh_c
            hs[:, step] = h
            self._cache.append((h_prev, c_prev, i, f, g, o, tanh_c))
        return hs[:, -1] if self.return_last else hs

    def backward(self, dy):
        x = self._x
        b, t, d = x.shape
        u = self.units
        w, r = self.params["W"], self.params["R"]
        dW = np.zeros_like(w)
        dR = np.zeros_like(r)
        db = np.zeros_like(self.params["b"])
        dx = np.empty_like(x)
        dh_next = np.zeros((b, u), dtype=x.dtype)
        dc_next = np.zeros((b, u), dtype=x.dtype)
        for step in reversed(range(t)):
            h_prev, c_prev, i, f, g, o, tanh_c = self._cache[step]
            if self.return_last:
                dh = dh_next + (dy if step == t - 1 else 0.0)
            else:
                dh = dh_next + dy[:, step]
            dc = dc_next + dh * o * (1.0 - tanh_c**2)
            dz = np.concatenate(
                [
                    dc * g * i * (1.0 - i),
                    dc * c_prev * f * (1.0 - f),
                    dc * i * (1.0 - g**2),
                    dh * tanh_c * o * (1.0 - o),
                ],
                axis=1,
            )
            dW += x[:, step].T @ dz
            dR += h_prev.T @ dz
            db += dz.sum(axis=0)
            dx[:, step] = dz @ w.T
            dh_next = dz @ r.T
            dc_next = dc * f
        self.grads = {"W": dW, "R": dR, "b": db}
        return dx

    def spec(self):
        return {"kind": "lstm", "units": self.units, "return_last": self.return_last}


class Dropout(Layer):
    """Inverted dropout: active only in train mode, identity at inference."""

    def __init__(self, rate: float):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        keep = rng.random(x.shape) >= self.rate
        self._mask = keep.astype(x.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask

    def spec(self):
        return {"kind": "dropout", "rate": self.rate}


class Reshape(Layer):
    """Per-sample reshape, e.g. pooled feature maps into an LSTM sequence."""

    def __init__(self, target: tuple[int, ...]):
        super().__init__()
        self.target = tuple(int(v) for v in target)

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.target)):
            raise ShapeMismatch(f"cannot reshape {in_shape} into {self.target}")
        return self.target

    def forward(self, x, train=False, rng=None):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], *self.target)

    def backward(self, dy):
        return dy.reshape(self._in_shape)

    def spec(self):
        return {"kind": "reshape", "target": list(self.target)}


_KINDS = {
    "dense": lambda s: Dense(s["units"], s["activation"]),
    "conv2d": lambda s: Conv2D(tuple(s["kernel"]), s["filters"]),
    "maxpool": lambda s: MaxPool(tuple(s["pool"])),
    "lstm": lambda s: LSTM(s["units"], s["return_last"]),
    "dropout": lambda s: Dropout(s["rate"]),
    "reshape": lambda s: Reshape(tuple(s["target"])),
}


def layer_from_spec(spec: dict) -> Layer:
    try:
        return _KINDS[spec["kind"]](spec)
    except KeyError:
        raise ValueError(f"unknown layer kind {spec.get('kind')!r}") from None
