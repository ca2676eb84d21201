"""Angular-power-spectrum inference: MBS APS in, SBS APS out."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ..features import batch_aps, log_whiten
from ..neural import MlpModel, mlp_forward
from ..scene import Scene, SceneConfig, channels_for_positions, sample_ensemble

LOG_FLOOR = 1e-12
TARGET_FLOOR = 1e-3  # keeps the regression on the main lobes rather than deep nulls


@dataclass(frozen=True)
class ApsConfig:
    scene: SceneConfig
    source_site: str = "mbs"
    target_site: str = "sbs"
    source_grid: int = 256
    target_grid: int = 1024
    snapshots: int = 4
    jitter_radius: float = 1.0  # metres; local-area displacement between snapshots

    def __post_init__(self):
        if self.snapshots < 1:
            raise ValueError("snapshots must be >= 1")
        if self.jitter_radius < 0:
            raise ValueError("jitter_radius must be >= 0")


@dataclass(eq=False)
class ApsDataset:
    source_aps: np.ndarray  # (N, G_source)
    target_aps: np.ndarray  # (N, G_target)
    target_channels: np.ndarray  # (N, M_target) at the nominal position
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.source_aps)

    def subset(self, idx):
        idx = np.asarray(idx)
        return ApsDataset(self.source_aps[idx], self.target_aps[idx], self.target_channels[idx], dict(self.metadata))

    def split(self, n_train):
        return self.subset(np.arange(n_train)), self.subset(np.arange(n_train, len(self)))


def snapshot_positions(position, snapshots, radius, rng):
    """Nominal position followed by ``snapshots - 1`` uniform draws in a disc around it."""
    p = np.asarray(position, dtype=np.float64)
    if snapshots == 1 or radius == 0:
        return np.repeat(p[None], snapshots, axis=0)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, snapshots - 1))
    phi = rng.uniform(-np.pi, np.pi, snapshots - 1)
    return np.vstack([p[None], p + np.column_stack([r * np.cos(phi), r * np.sin(phi)])])


def scene_spectra(scene: Scene, config: ApsConfig, rng):
    """Per-user source APS, target APS and nominal target channels for every user in ``scene``."""
    src, tgt, chans = [], [], []
    for u in scene.users:
        pos = snapshot_positions(u.position, config.snapshots, config.jitter_radius, rng)
        hs = channels_for_positions(scene, config.source_site, pos)
        ht = channels_for_positions(scene, config.target_site, pos)
        src.append(hs)
        tgt.append(ht)
        chans.append(ht[0])
    src_aps = batch_aps(np.stack(src), config.source_grid, scene.site(config.source_site).array.spacing)
    tgt_aps = batch_aps(np.stack(tgt), config.target_grid, scene.site(config.target_site).array.spacing)
    return src_aps, tgt_aps, np.stack(chans)


def build_aps_dataset(config: ApsConfig, n_points, seed) -> ApsDataset:
    """Single-user scene draws; APS averaged over local-area snapshots."""
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    scene_cfg = replace(config.scene, num_users=1)
    scenes = sample_ensemble(scene_cfg, n_points, seed)
    rng = np.random.default_rng([seed, 3])
    parts = [scene_spectra(s, config, rng) for s in scenes]
    meta = {"kind": "aps", "seed": int(seed), "snapshots": int(config.snapshots),
            "source_grid": int(config.source_grid), "target_grid": int(config.target_grid)}
    return ApsDataset(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
                      np.concatenate([p[2] for p in parts]), meta)


def aps_input_features(source_aps):
    """Log-whitened source spectrum with a floor relative to each row's maximum."""
    s = np.atleast_2d(source_aps)
    peak = s.max(axis=1, keepdims=True)
    return log_whiten(s, np.where(peak > 0, peak * LOG_FLOOR, 1.0))


def log_spectrum_target(target_aps, floor=TARGET_FLOOR):
    """Peak-normalised log spectrum, floored at ``log(floor)``."""
    t = np.atleast_2d(target_aps)
    peak = t.max(axis=1, keepdims=True)
    peak = np.where(peak > 0, peak, 1.0)
    return np.log(np.maximum(t / peak, floor))


def infer_aps(model: MlpModel, source_aps):
    """Predicted (peak-normalised) target APS."""
    return np.exp(mlp_forward(model, aps_input_features(source_aps)))
