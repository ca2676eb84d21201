"""Mini-batch training loop shared by the MLP and the GRU seq2seq model."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gru import GruSeq2Seq, gru_gradients
from .mlp import MlpModel, mlp_gradients


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    epochs: int = 20
    optimizer: str = "adam"  # "adam" | "sgd"
    seed: int = 0
    patience: int = 0  # 0 disables early stopping
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 1.0  # multiplicative per epoch

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainResult:
    model: object
    loss_trace: list = field(default_factory=list)  # mean training loss per epoch
    val_trace: list = field(default_factory=list)
    epochs_run: int = 0


def gradients(model, x, y):
    if isinstance(model, MlpModel):
        return mlp_gradients(model, x, y)
    if isinstance(model, GruSeq2Seq):
        return gru_gradients(model, x, y)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def evaluate_loss(model, x, y, batch_size=4096):
    total = 0.0
    n = len(x)
    for s in range(0, n, batch_size):
        loss, _ = gradients(model, x[s:s + batch_size], y[s:s + batch_size])
        total += loss * len(x[s:s + batch_size])
    return total / n


def train(model, x, y, cfg: TrainConfig, val=None, callback=None) -> TrainResult:
    """Train a copy of ``model``; the input model is left untouched.

    Shuffling uses ``cfg.seed`` only, and every reduction runs in a fixed
    order, so equal inputs give bit-identical parameters. ``val`` is an
    optional ``(x_val, y_val)`` pair used for early stopping.
    """
    model = model.copy()
    params = model.params
    x = np.asarray(x)
    y = np.asarray(y)
    n = len(x)
    if n == 0 or len(y) != n:
        raise ValueError("x and y must be non-empty and of equal length")
    rng = np.random.default_rng(cfg.seed)
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    result = TrainResult(model)
    best_val, best_params, bad = math.inf, None, 0
    lr = cfg.learning_rate
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grads = gradients(model, x[idx], y[idx])
            if not math.isfinite(loss) or loss > 1e6:
                result.loss_trace.append(loss)
                raise TrainingDivergedError(f"training diverged at epoch {epoch} (loss={loss})", result.loss_trace)
            epoch_loss += loss * len(idx)
            step += 1
            if lr == 0:
                continue
            if cfg.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= lr * g
            else:
                b1, b2 = cfg.beta1, cfg.beta2
                corr1 = 1.0 - b1 ** step
                corr2 = 1.0 - b2 ** step
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= b1
                    mi += (1.0 - b1) * g
                    vi *= b2
                    vi += (1.0 - b2) * g * g
                    p -= lr * (mi / corr1) / (np.sqrt(vi / corr2) + cfg.eps)
        result.loss_trace.append(epoch_loss / n)
        result.epochs_run = epoch + 1
        lr *= cfg.lr_decay
        if val is not None:
            vl = evaluate_loss(model, *val)
            result.val_trace.append(vl)
            if cfg.patience:
                if vl < best_val:
                    best_val, bad = vl, 0
                    best_params = [p.copy() for p in params]
                else:
                    bad += 1
                    if bad >= cfg.patience:
                        break
        if callback is not None:
            callback(epoch, result)
    if best_params is not None:
        for p, b in zip(params, best_params):
            p[...] = b
    return result
