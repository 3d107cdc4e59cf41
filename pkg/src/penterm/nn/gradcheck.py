"""Central-difference gradient verification for every layer kind."""

from __future__ import annotations

import numpy as np

from .model import ModelGraph


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())


def gradient_check_layer(layer, input_shape: tuple, seed: int = 0, eps: float = 1e-5,
                         batch: int = 2) -> float:
    """Max relative error of a single layer's parameter and input gradients.

    The scalar probe loss is sum(output * fixed random weights), so its
    gradient w.r.t. the output is exactly那 weight tensor.
    """
    rng = np.random.default_rng(seed)
    layer.out_shape(input_shape)
    layer.init_params(input_shape, np.random.default_rng(seed + 1), np.float64)
    x = rng.normal(size=(batch, *input_shape))
    probe = rng.normal(size=(batch, *layer.out_shape(input_shape)))

    def loss_at(x_now):
        return float((layer.forward(x_now, train=False) * probe).sum())

    layer.forward(x, train=False)
    dx = layer.backward(probe)
    worst = 0.0

    num_dx = np.empty_like(x)
    flat, out = x.reshape(-1), num_dx.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        up = loss_at(x)
        flat[k] = orig - eps
        down = loss_at(x)
        flat[k] = orig
        out[k] = (up - down) / (2 * eps)
    worst = max(worst, _relative_error(dx, num_dx))

    for name, p in layer.params.items():
        layer.forward(x, train=False)
        layer.backward(probe)
        analytic = layer.grads[name].copy()
        numeric = np.empty_like(p)
        flat, out = p.reshape(-1), numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss_at(x)
            flat[k] = orig - eps
            down = loss_at(x)
            flat[k] = orig
            out[k] = (up - down) / (2 * eps)
        worst = max(worst, _relative_error(analytic, numeric))
    return worst


def gradient_check_model(model: ModelGraph, x, y_onehot, eps: float = 1e-5) -> float:
    """Max relative error of d(cross-entropy + l2)/dparams for a full model."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y_onehot, dtype=np.float64)
    _, grads = model.loss_and_grads(x, y, train=False)
    worst = 0.0
    for name, p in model.parameters():
        numeric = np.empty_like(p)
        flat, out = p.reshape(-1), numeric.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = model.loss_and_grads(x, y, train=False)[0]
            flat[k] = orig - eps
            down = model.loss_and_grads(x, y, train=False)[0]
            flat[k] = orig
            out[k] = (up - down) / (2 * eps)
        worst = max(worst, _relative_error(grads[name], numeric))
    return worst
