"""Delayed time-sequence inference for moving users, with the location baseline.

Each record is a window of ``L_in`` source-site feature vectors and the
target-site beam indices for the ``L_out`` slots starting at the last input
slot (horizon offset 0 is the current slot). The per-record ``delay`` picks
which horizon step is actually scored.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..features import Codebook, build_dft_codebook, csi_features, gain_ratio, quantize
from ..neural import GruSeq2Seq, MlpModel, gru_forward, mlp_forward
from ..scene import SceneConfig, Site, channels_for_positions, sample_ensemble, steering_vector
from .static import record_hash


@dataclass(frozen=True)
class TrajectoryConfig:
    scene: SceneConfig
    n_trajectories: int = 1000
    windows_per_trajectory: int = 8
    source_site: str = "mbs"
    target_site: str = "rsu"
    oversampling: int = 1
    delays: tuple = (1, 2, 3, 4, 5)
    delay_weights: tuple | None = None  # uniform when None

    def __post_init__(self):
        if self.n_trajectories < 1 or self.windows_per_trajectory < 1:
            raise ValueError("need at least one trajectory and one window")
        if any(d < 0 for d in self.delays) or not self.delays:
            raise ValueError("delays must be non-negative integers")
        if self.delay_weights is not None and len(self.delay_weights) != len(self.delays):
            raise ValueError("delay_weights must match delays")


@dataclass(eq=False)
class SequenceDataset:
    inputs: np.ndarray  # (N, L_in, D)
    targets: np.ndarray  # (N, L_out) beam indices at slots last+0 .. last+L_out-1
    channels: np.ndarray  # (N, L_out, M_target)
    delays: np.ndarray  # (N,)
    positions: np.ndarray  # (N, 2) true user position at the last input slot
    trajectory: np.ndarray  # (N,) trajectory id
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.delays)

    @property
    def l_in(self):
        return self.inputs.shape[1]

    @property
    def l_out(self):
        return self.targets.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return SequenceDataset(self.inputs[idx], self.targets[idx], self.channels[idx], self.delays[idx],
                               self.positions[idx], self.trajectory[idx], dict(self.metadata))

    def split_by_trajectory(self, n_train_traj):
        train = np.flatnonzero(self.trajectory < n_train_traj)
        test = np.flatnonzero(self.trajectory >= n_train_traj)
        return self.subset(train), self.subset(test)

    def record_hashes(self):
        return [record_hash(self.inputs[i], self.targets[i], self.channels[i]) for i in range(len(self))]

    def scored_channels(self):
        return self.channels[np.arange(len(self)), self.delays]

    def scored_targets(self):
        return self.targets[np.arange(len(self)), self.delays]


def build_sequence_dataset(config: TrajectoryConfig, l_in, l_out, seed) -> SequenceDataset:
    """Constant-velocity trajectories sliced into overlapping windows."""
    if l_in < 1 or l_out < 1:
        raise ValueError("l_in and l_out must be >= 1")
    if max(config.delays) > l_out - 1:
        raise ValueError(f"largest delay {max(config.delays)} needs l_out >= {max(config.delays) + 1}")
    rng = np.random.default_rng([seed, 1])
    scenes = sample_ensemble(config.scene, config.n_trajectories, seed)
    n_win = config.windows_per_trajectory
    n_slots = n_win + l_in + l_out - 2
    slots = np.arange(n_slots)
    feats, targs, chans, pos_all = [], [], [], []
    t_site = scenes[0].site(config.target_site)
    cb = build_dft_codebook(t_site.array.num_elements, config.oversampling)
    for sc in scenes:
        u = sc.user("u0")
        pos = np.asarray(u.position)[None, :] + slots[:, None] * np.asarray(u.velocity)[None, :]
        h_src = channels_for_positions(sc, config.source_site, pos)
        h_tgt = channels_for_positions(sc, config.target_site, pos)
        feats.append(csi_features(h_src))
        targs.append(quantize(h_tgt, cb))
        chans.append(h_tgt)
        pos_all.append(pos)
    win = np.arange(n_win)
    in_idx = win[:, None] + np.arange(l_in)[None, :]
    last = win + l_in - 1
    out_idx = last[:, None] + np.arange(l_out)[None, :]
    inputs = np.concatenate([f[in_idx] for f in feats])
    targets = np.concatenate([t[out_idx] for t in targs])
    channels = np.concatenate([c[out_idx] for c in chans])
    positions = np.concatenate([p[last] for p in pos_all])
    trajectory = np.repeat(np.arange(len(scenes)), n_win)
    w = None if config.delay_weights is None else np.asarray(config.delay_weights, float) / np.sum(config.delay_weights)
    delays = rng.choice(np.asarray(config.delays), size=len(trajectory), p=w)
    meta = {"kind": "sequence", "seed": int(seed), "l_in": int(l_in), "l_out": int(l_out),
            "source_site": config.source_site, "target_site": config.target_site,
            "oversampling": int(config.oversampling)}
    return SequenceDataset(inputs, targets, channels, delays.astype(np.int64), positions, trajectory, meta)


def lo_baseline(user_position, std, target_site: Site, codebook: Codebook, rng=None):
    """Location-based beam: noisy position, LoS bearing to the target site, nearest codeword.

    ``user_position`` may be a single ``(2,)`` point or an ``(N, 2)`` batch.
    """
    if std < 0:
        raise ValueError("std must be >= 0")
    p = np.asarray(user_position, dtype=np.float64)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if std > 0:
        if rng is None:
            raise ValueError("rng required when std > 0")
        p = p + std * rng.standard_normal(p.shape)
    arr = target_site.array
    out = np.empty(len(p), dtype=np.int64)
    for i, (x, y) in enumerate(p):
        bearing = math.atan2(y - target_site.position[1], x - target_site.position[0])
        rel = (bearing - arr.orientation + math.pi) % (2 * math.pi) - math.pi
        # clamp to the array's front edge; LoS behind the array is not steerable
        rel = min(max(rel, -math.pi / 2), math.pi / 2)
        a = steering_vector(arr, target_site.carrier_wavelength, arr.orientation + rel)
        out[i] = quantize(a, codebook)
    return int(out[0]) if single else out


@dataclass(eq=False)
class SequenceReport:
    delays: list
    model_ratio: dict  # delay -> mean gain ratio
    lo_ratio: dict
    counts: dict
    point_model: np.ndarray  # per-record gain ratio
    point_lo: np.ndarray

    def rows(self):
        return [(d, self.counts[d], self.model_ratio[d], self.lo_ratio[d]) for d in self.delays]

    @property
    def overall_model(self):
        return float(np.mean(self.point_model))

    @property
    def overall_lo(self):
        return float(np.mean(self.point_lo))


def scored_predictions(model, dataset: SequenceDataset, batch_size=2048):
    """Predicted beam index for each record at its scored (delayed) slot.

    ``model`` may be a :class:`GruSeq2Seq` (uses the horizon step equal to the
    delay), an :class:`MlpModel` (static inference from the last input slot,
    blind to the delay) or a callable ``dataset -> indices``.
    """
    n = len(dataset)
    if isinstance(model, GruSeq2Seq):
        out = np.empty(n, dtype=np.int64)
        for s in range(0, n, batch_size):
            p = gru_forward(model, dataset.inputs[s:s + batch_size], dataset.l_out)
            d = dataset.delays[s:s + batch_size]
            out[s:s + batch_size] = np.argmax(p[np.arange(len(d)), d], axis=1)
        return out
    if isinstance(model, MlpModel):
        return np.argmax(mlp_forward(model, dataset.inputs[:, -1]), axis=1)
    return np.asarray(model(dataset), dtype=np.int64)


def evaluate_sequence(model, dataset: SequenceDataset, target_site: Site, codebook: Codebook,
                      lo_std=1.0, seed=0) -> SequenceReport:
    """Mean beamforming-gain ratio versus the optimal codeword, per delay, for the model and LO."""
    if codebook.num_elements != dataset.channels.shape[2]:
        raise ValueError("codebook does not match target-site array size")
    h = dataset.scored_channels()
    pred = scored_predictions(model, dataset)
    r_model = gain_ratio(h, pred, codebook)
    rng = np.random.default_rng([seed, 2])
    lo_idx = lo_baseline(dataset.positions, lo_std, target_site, codebook, rng)
    r_lo = gain_ratio(h, lo_idx, codebook)
    delays = sorted(int(d) for d in np.unique(dataset.delays))
    model_ratio, lo_ratio, counts = {}, {}, {}
    for d in delays:
        sel = dataset.delays == d
        model_ratio[d] = float(np.mean(r_model[sel]))
        lo_ratio[d] = float(np.mean(r_lo[sel]))
        counts[d] = int(np.sum(sel))
    return SequenceReport(delays, model_ratio, lo_ratio, counts, r_model, r_lo)


def oracle_sequence_predictor(codebook: Codebook):
    def predict(dataset: SequenceDataset):
        return quantize(dataset.scored_channels(), codebook)
    return predict


def paired_difference_ci(a, b, z=1.959963984540054):
    """Mean of ``a - b`` with a normal-approximation two-sided confidence interval."""
    d = np.asarray(a, float) - np.asarray(b, float)
    mean = float(d.mean())
    half = float(z * d.std(ddof=1) / math.sqrt(len(d))) if len(d) > 1 else math.inf
    return mean, mean - half, mean + half
