"""GRU encoder-decoder for sequence-to-sequence CSI inference.

The encoder folds the input window into its final hidden state; the decoder
starts from that state with a zero input and feeds each step's output back as
the next input. Gate pre-activations are stacked as ``[update; reset;
candidate]`` in every weight matrix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import HEADS, LabelError, NonFiniteInputError, softmax

PARAM_NAMES = ("enc_W", "enc_U", "enc_b", "dec_W", "dec_U", "dec_b", "out_W", "out_b")


@dataclass(eq=False)
class GruSeq2Seq:
    input_dim: int
    hidden: int
    output_dim: int
    params: list  # ordered as PARAM_NAMES
    head: str = "softmax"
    seed: int = 0

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"unknown head {self.head!r}")
        d, h, k = self.input_dim, self.hidden, self.output_dim
        shapes = [(3 * h, d), (3 * h, h), (3 * h,), (3 * h, k), (3 * h, h), (3 * h,), (k, h), (k,)]
        if len(self.params) != len(shapes):
            raise ValueError("wrong number of parameter arrays")
        for name, p, s in zip(PARAM_NAMES, self.params, shapes):
            if p.shape != s:
                raise ValueError(f"{name} has shape {p.shape}, expected {s}")

    @property
    def layer_dims(self):
        return [self.input_dim, self.hidden, self.output_dim]

    def param_names(self):
        return list(PARAM_NAMES)

    def copy(self):
        return GruSeq2Seq(self.input_dim, self.hidden, self.output_dim,
                          [p.copy() for p in self.params], self.head, self.seed)


def init_gru(input_dim, hidden, output_dim, head="softmax", seed=0) -> GruSeq2Seq:
    rng = np.random.default_rng(seed)

    def uni(shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, shape)

    h = hidden
    params = [
        uni((3 * h, input_dim), h), uni((3 * h, h), h), np.zeros(3 * h),
        uni((3 * h, output_dim), h), uni((3 * h, h), h), np.zeros(3 * h),
        uni((output_dim, h), h), np.zeros(output_dim),
    ]
    return GruSeq2Seq(input_dim, hidden, output_dim, params, head, seed)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _cell(x, h, w, u, b, hid):
    ax = x @ w.T + b
    hu = h @ u[:2 * hid].T
    z = _sigmoid(ax[:, :hid] + hu[:, :hid])
    r = _sigmoid(ax[:, hid:2 * hid] + hu[:, hid:])
    rh = r * h
    c = np.tanh(ax[:, 2 * hid:] + rh @ u[2 * hid:].T)
    h_new = (1.0 - z) * h + z * c
    return h_new, (x, h, z, r, rh, c)


def _cell_back(dh_new, cache, w, u, grads_w, grads_u, grads_b, hid):
    x, h, z, r, rh, c = cache
    dc = dh_new * z
    dz = dh_new * (c - h)
    dh = dh_new * (1.0 - z)
    dac = dc * (1.0 - c * c)
    drh = dac @ u[2 * hid:]
    dr = drh * h
    dh += drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    da = np.concatenate([daz, dar, dac], axis=1)
    grads_w += da.T @ x
    grads_b += da.sum(axis=0)
    grads_u[:2 * hid] += da[:, :2 * hid].T @ h
    grads_u[2 * hid:] += dac.T @ rh
    dh += da[:, :2 * hid] @ u[:2 * hid]
    dx = da @ w
    return dx, dh


def _check_seq(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != model.input_dim or x.shape[1] < 1:
        raise ValueError(f"input must be (batch, L_in>=1, {model.input_dim})")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInputError("input contains non-finite values")
    return x


def _run(model: GruSeq2Seq, x, horizon):
    ew, eu, eb, dw, du, db, ow, ob = model.params
    hid = model.hidden
    bsz = x.shape[0]
    h = np.zeros((bsz, hid))
    enc_caches = []
    for t in range(x.shape[1]):
        h, cache = _cell(x[:, t], h, ew, eu, eb, hid)
        enc_caches.append(cache)
    y_prev = np.zeros((bsz, model.output_dim))
    dec_caches, states, logits, outs = [], [], [], []
    s = h
    for _ in range(horizon):
        s, cache = _cell(y_prev, s, dw, du, db, hid)
        o = s @ ow.T + ob
        y = softmax(o) if model.head == "softmax" else o
        dec_caches.append(cache)
        states.append(s)
        logits.append(o)
        outs.append(y)
        y_prev = y
    return enc_caches, dec_caches, states, logits, outs


def gru_forward(model: GruSeq2Seq, x, horizon):
    """Decode ``horizon`` steps from an input window.

    ``x`` is ``(L_in, D)`` or ``(batch, L_in, D)``. The softmax head yields
    per-step probabilities; the spectrum head yields non-negative spectra
    (``exp`` of the predicted log-spectrum).
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    single = np.asarray(x).ndim == 2
    x = _check_seq(model, x)
    outs = np.stack(_run(model, x, horizon)[4], axis=1)
    if model.head == "log_spectrum":
        outs = np.exp(outs)
    return outs[0] if single else outs


def gru_forward_log(model: GruSeq2Seq, x, horizon):
    """Raw decoder outputs (log-spectra for the spectrum head)."""
    x = _check_seq(model, x)
    return np.stack(_run(model, x, horizon)[4], axis=1)


def gru_gradients(model: GruSeq2Seq, x, y):
    """Backpropagation through time, including the output feedback path.

    ``y`` is ``(batch, L_out)`` integer labels (softmax head) or
    ``(batch, L_out, K)`` target log-spectra (spectrum head). The loss is the
    mean per-step cross-entropy or the mean squared error respectively.
    Returns ``(loss, grads)`` ordered like ``model.params``.
    """
    x = _check_seq(model, x)
    bsz = x.shape[0]
    y = np.asarray(y)
    if y.ndim < 2 or y.shape[0] != bsz:
        raise LabelError("targets must be (batch, L_out[, K])")
    horizon = y.shape[1]
    k = model.output_dim
    if model.head == "softmax":
        y = y.astype(np.int64)
        if y.ndim != 2 or np.any(y < 0) or np.any(y >= k):
            raise LabelError(f"labels must be integers in [0, {k})")
    elif y.shape != (bsz, horizon, k):
        raise LabelError(f"targets must have shape {(bsz, horizon, k)}")

    enc_caches, dec_caches, states, logits, outs = _run(model, x, horizon)
    ew, eu, eb, dw, du, db, ow, ob = model.params
    hid = model.hidden
    grads = [np.zeros_like(p) for p in model.params]
    g_ew, g_eu, g_eb, g_dw, g_du, g_db, g_ow, g_ob = grads

    rows = np.arange(bsz)
    if model.head == "softmax":
        loss = 0.0
        for t in range(horizon):
            loss -= np.sum(np.log(np.maximum(outs[t][rows, y[:, t]], 1e-300)))
        loss /= bsz * horizon
    else:
        loss = float(np.mean((np.stack(logits, axis=1) - y) ** 2))
        scale = 2.0 / (bsz * horizon * k)

    ds = np.zeros((bsz, hid))
    dy_fb = np.zeros((bsz, k))
    for t in range(horizon - 1, -1, -1):
        if model.head == "softmax":
            p = outs[t]
            do = p.copy()
            do[rows, y[:, t]] -= 1.0
            do /= bsz * horizon
            do += p * (dy_fb - np.sum(p * dy_fb, axis=1, keepdims=True))
        else:
            do = scale * (logits[t] - y[:, t]) + dy_fb
        g_ow += do.T @ states[t]
        g_ob += do.sum(axis=0)
        ds = ds + do @ ow
        dy_fb, ds = _cell_back(ds, dec_caches[t], dw, du, g_dw, g_du, g_db, hid)
    dh = ds
    for t in range(len(enc_caches) - 1, -1, -1):
        _, dh = _cell_back(dh, enc_caches[t], ew, eu, g_ew, g_eu, g_eb, hid)
    return float(loss), grads
