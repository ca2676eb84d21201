"""Remote static CSI inference: local MBS CSI in, SBS beam index out."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..features import Codebook, build_dft_codebook, csi_features, gain_ratio, quantize
from ..neural import MlpModel, mlp_forward, topk_from_probs
from ..scene import SceneConfig, batch_channels, sample_ensemble


class CodebookMismatchError(ValueError):
    pass


class LeakageError(ValueError):
    """Test records also present in the training set."""


def record_hash(*arrays):
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(a.tobytes())
    return h.hexdigest()


@dataclass(eq=False)
class StaticDataset:
    features: np.ndarray  # (N, D)
    targets: np.ndarray  # (N,) codeword indices at the target site
    channels: np.ndarray  # (N, M_target) complex, for gain evaluation
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.targets)

    def record_hashes(self):
        return [record_hash(self.features[i], self.targets[i:i + 1], self.channels[i]) for i in range(len(self))]

    def subset(self, idx):
        idx = np.asarray(idx)
        return StaticDataset(self.features[idx], self.targets[idx], self.channels[idx], dict(self.metadata))

    def split(self, n_train):
        return self.subset(np.arange(n_train)), self.subset(np.arange(n_train, len(self)))


def build_static_dataset(config: SceneConfig, n_points, seed, source_sites=("mbs",), target_site="sbs",
                         oversampling=1) -> StaticDataset:
    """One independent scene draw per record.

    Features are the log-whitened angular magnitudes of each source site's
    CSI, concatenated in ``source_sites`` order; the target is the best DFT
    codeword for the target-site CSI.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    scenes = sample_ensemble(config, n_points, seed)
    blocks = [csi_features(batch_channels(scenes, s, "u0")) for s in source_sites]
    h_t = batch_channels(scenes, target_site, "u0")
    m_t = h_t.shape[1]
    cb = build_dft_codebook(m_t, oversampling)
    meta = {
        "kind": "static",
        "seed": int(seed),
        "source_sites": list(source_sites),
        "target_site": target_site,
        "target_elements": int(m_t),
        "oversampling": int(oversampling),
    }
    return StaticDataset(np.concatenate(blocks, axis=1), quantize(h_t, cb), h_t, meta)


@dataclass(eq=False)
class ErrorCdf:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.clip(np.asarray(self.values, dtype=np.float64), 0.0, 1.0))
        self.values = v

    def quantile(self, p):
        """Smallest value ``v`` with ``P(error <= v) >= p``."""
        return float(np.quantile(self.values, p, method="inverted_cdf"))

    def fraction_below(self, x):
        return float(np.mean(self.values < x))

    def cdf(self, x):
        return float(np.searchsorted(self.values, x, side="right") / len(self.values))

    def deciles(self):
        return [self.quantile(p / 10) for p in range(1, 10)]


@dataclass(eq=False)
class StaticReport:
    top1_errors: np.ndarray
    top2_errors: np.ndarray
    top1_accuracy: float
    top2_accuracy: float

    @property
    def top1(self):
        return ErrorCdf(self.top1_errors)

    @property
    def top2(self):
        return ErrorCdf(self.top2_errors)


def _probabilities(model, features):
    if isinstance(model, MlpModel):
        return mlp_forward(model, features)
    return np.asarray(model(features))


def oracle_predictor(dataset: StaticDataset, codebook: Codebook):
    """Predictor that returns the one-hot optimal codeword of each record (matched by row)."""
    table = {record_hash(f): t for f, t in zip(dataset.features, quantize(dataset.channels, codebook))}

    def predict(features):
        out = np.zeros((len(features), codebook.size))
        for i, f in enumerate(features):
            out[i, table[record_hash(f)]] = 1.0
        return out

    return predict


def evaluate_static(model, test: StaticDataset, codebook: Codebook, train_hashes=None) -> StaticReport:
    """Normalised beamforming error of top-1 and genie-selected best-of-top-2 predictions."""
    if codebook.num_elements != test.channels.shape[1]:
        raise CodebookMismatchError(
            f"codebook for M={codebook.num_elements} but channels have M={test.channels.shape[1]}")
    if train_hashes is not None:
        overlap = set(train_hashes) & set(test.record_hashes())
        if overlap:
            raise LeakageError(f"{len(overlap)} test records also appear in the training set")
    probs = _probabilities(model, test.features)
    if probs.shape[1] != codebook.size:
        raise CodebookMismatchError(f"model outputs {probs.shape[1]} classes, codebook has {codebook.size}")
    top = topk_from_probs(probs, min(2, codebook.size))
    r1 = gain_ratio(test.channels, top[:, 0], codebook)
    r2 = np.maximum(r1, gain_ratio(test.channels, top[:, -1], codebook))
    best = quantize(test.channels, codebook)
    return StaticReport(
        top1_errors=1.0 - r1,
        top2_errors=1.0 - r2,
        top1_accuracy=float(np.mean(top[:, 0] == best)),
        top2_accuracy=float(np.mean(np.any(top == best[:, None], axis=1))),
    )


def random_codeword_errors(channels, codebook: Codebook, rng):
    """Normalised errors of a predictor that picks a uniformly random codeword."""
    idx = rng.integers(0, codebook.size, len(channels))
    return 1.0 - gain_ratio(channels, idx, codebook)
