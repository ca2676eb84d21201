"""Fully-connected network with rectifier hidden layers.

Two output heads: ``"softmax"`` (probability vector over codebook indices,
trained on cross-entropy) and ``"log_spectrum"`` (real output read as a log
angular power spectrum, trained on mean squared error).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEADS = ("softmax", "log_spectrum")


class NonFiniteInputError(ValueError):
    pass


class LabelError(ValueError):
    pass


@dataclass(eq=False)
class MlpModel:
    layer_dims: list
    weights: list  # W[i] has shape (dims[i+1], dims[i])
    biases: list
    head: str = "softmax"
    seed: int = 0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        self.layer_dims = [int(d) for d in self.layer_dims]
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("parameter count does not match layer_dims")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[i + 1], self.layer_dims[i]) or b.shape != (self.layer_dims[i + 1],):
                raise ValueError(f"layer {i} parameter shapes do not chain")

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def param_names(self):
        names = []
        for i in range(len(self.weights)):
            names.extend([f"W{i}", f"b{i}"])
        return names

    def copy(self):
        return MlpModel(list(self.layer_dims), [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases], self.head, self.seed)


def init_mlp(d_in, n_out, hidden=(100, 100, 100), head="softmax", seed=0) -> MlpModel:
    """He-initialised network; the default 3x100 topology is the one used throughout."""
    rng = np.random.default_rng(seed)
    dims = [int(d_in), *[int(h) for h in hidden], int(n_out)]
    ws, bs = [], []
    for i in range(len(dims) - 1):
        scale = np.sqrt(2.0 / dims[i])
        ws.append(rng.standard_normal((dims[i + 1], dims[i])) * scale)
        bs.append(np.zeros(dims[i + 1]))
    return MlpModel(dims, ws, bs, head, seed)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(x, d_in):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != d_in:
        raise ValueError(f"expected input width {d_in}, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("input contains non-finite values")
    return x


def _forward(model: MlpModel, x):
    acts = [x]
    pre = []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)
    return pre, acts


def mlp_forward(model: MlpModel, x):
    """Probabilities (softmax head) or log-spectrum (spectrum head); 1-D or batched input."""
    x = _check_input(x, model.layer_dims[0])
    _, acts = _forward(model, np.atleast_2d(x))
    out = softmax(acts[-1]) if model.head == "softmax" else acts[-1]
    return out[0] if x.ndim == 1 else out


def mlp_loss(model: MlpModel, x, y):
    x = _check_input(np.atleast_2d(x), model.layer_dims[0])
    _, acts = _forward(model, x)
    return _loss(model, acts[-1], y)


def _loss(model, logits, y):
    if model.head == "softmax":
        p = softmax(logits)
        idx = np.asarray(y, dtype=np.int64)
        return float(-np.mean(np.log(np.maximum(p[np.arange(len(idx)), idx], 1e-300))))
    return float(np.mean((logits - y) ** 2))


def mlp_gradients(model: MlpModel, x, y):
    """Exact gradients of the mean loss over the batch.

    ``y`` holds integer labels for the softmax head and target log-spectra
    for the spectrum head. Returns ``(loss, grads)`` with ``grads`` ordered
    like ``model.params``.
    """
    x = _check_input(np.atleast_2d(x), model.layer_dims[0])
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    pre, acts = _forward(model, x)
    logits = acts[-1]
    if model.head == "softmax":
        y = np.asarray(y, dtype=np.int64)
        k = model.layer_dims[-1]
        if y.shape != (n,) or np.any(y < 0) or np.any(y >= k):
            raise LabelError(f"labels must be integers in [0, {k})")
        p = softmax(logits)
        loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), y], 1e-300))))
        delta = p
        delta[np.arange(n), y] -= 1.0
        delta /= n
    else:
        y = np.asarray(y, dtype=np.float64)
        if y.shape != logits.shape:
            raise LabelError(f"targets must have shape {logits.shape}")
        diff = logits - y
        loss = float(np.mean(diff ** 2))
        delta = 2.0 * diff / diff.size
    grads_w = [None] * len(model.weights)
    grads_b = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grads_w[i] = delta.T @ acts[i]
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (pre[i - 1] > 0)
    grads = []
    for gw, gb in zip(grads_w, grads_b):
        grads.extend([gw, gb])
    return loss, grads


def predict_topk(model: MlpModel, x, k):
    """Indices of the ``k`` most probable classes, ties resolved toward the smaller index."""
    return topk_from_probs(mlp_forward(model, x), k)


def topk_from_probs(p, k):
    p = np.asarray(p)
    n_cls = p.shape[-1]
    if not 1 <= k <= n_cls:
        raise ValueError(f"k must lie in [1, {n_cls}]")
    return np.argsort(-p, axis=-1, kind="stable")[..., :k]
