"""APS-overlap user grouping and SINR-thresholded sum rate."""
from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .features import aps_grid, build_dft_codebook, nearest_codeword, quantize
from .scene import sample_ensemble
from .tasks.aps import ApsConfig, infer_aps, scene_spectra

MODES = ("inferred-aps", "true-aps", "all-at-once", "orthogonal")


class EmptyGroupError(ValueError):
    pass


class DegenerateApsWarning(UserWarning):
    pass


def aps_overlap(a, b):
    """Cosine similarity of two non-negative spectra; 0 (with a warning) if either is all-zero."""
    a = np.asarray(getattr(a, "bins", a), dtype=np.float64)
    b = np.asarray(getattr(b, "bins", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("spectra must share the same grid")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        warnings.warn("overlap with an all-zero APS is defined as 0", DegenerateApsWarning, stacklevel=2)
        return 0.0
    return float(np.clip(a @ b / (na * nb), 0.0, 1.0))


def overlap_matrix(spectra):
    """Pairwise cosine overlaps for a ``(U, G)`` stack; all-zero rows overlap nothing."""
    s = np.asarray(spectra, dtype=np.float64)
    norms = np.linalg.norm(s, axis=1)
    unit = s / np.where(norms > 0, norms, 1.0)[:, None]
    out = np.clip(unit @ unit.T, 0.0, 1.0)
    np.fill_diagonal(out, 1.0)
    out[norms == 0, :] = 0.0
    out[:, norms == 0] = 0.0
    return out


@dataclass
class ConflictGraph:
    vertices: list
    edges: set = field(default_factory=set)  # frozenset({u, v})
    overlaps: dict = field(default_factory=dict)  # frozenset({u, v}) -> overlap

    def neighbors(self, v):
        return {w for e in self.edges if v in e for w in e if w != v}

    def degree(self, v):
        return sum(1 for e in self.edges if v in e)

    def adjacency(self):
        index = {v: i for i, v in enumerate(self.vertices)}
        adj = np.zeros((len(self.vertices), len(self.vertices)), dtype=bool)
        for e in self.edges:
            u, v = tuple(e)
            adj[index[u], index[v]] = adj[index[v], index[u]] = True
        return adj


def build_conflict_graph(spectra, threshold, ids=None) -> ConflictGraph:
    """Edge between two users whenever their APS overlap exceeds ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    spectra = [np.asarray(getattr(s, "bins", s)) for s in spectra]
    ids = list(range(len(spectra))) if ids is None else list(ids)
    if len(ids) != len(spectra) or len(set(ids)) != len(ids):
        raise ValueError("ids must be unique and match the spectra")
    ov = overlap_matrix(np.stack(spectra)) if spectra else np.zeros((0, 0))
    g = ConflictGraph(ids)
    for i, j in itertools.combinations(range(len(ids)), 2):
        key = frozenset((ids[i], ids[j]))
        g.overlaps[key] = float(ov[i, j])
        if ov[i, j] > threshold:
            g.edges.add(key)
    return g


@dataclass
class GroupAssignment:
    groups: dict  # user id -> group index

    @property
    def num_groups(self):
        return 1 + max(self.groups.values()) if self.groups else 0

    def members(self):
        out = [[] for _ in range(self.num_groups)]
        for u, g in self.groups.items():
            out[g].append(u)
        return out


def greedy_color(graph: ConflictGraph) -> GroupAssignment:
    """Largest-degree-first greedy colouring; each vertex takes the smallest free colour.

    Degree ties are broken by the vertices' position in ``graph.vertices``.
    """
    if not graph.vertices:
        return GroupAssignment({})
    adj = graph.adjacency()
    deg = adj.sum(axis=1)
    order = np.lexsort((np.arange(len(deg)), -deg))
    colors = kernels.greedy_color(adj, order)
    return GroupAssignment({v: int(c) for v, c in zip(graph.vertices, colors)})


def sum_rate(channels, groups, beams, total_power, noise_power, sinr_min):
    """Time-shared sum rate in bits/s/Hz.

    ``groups`` is a list of member-index lists (or a :class:`GroupAssignment`
    over integer user ids). Each of the ``g`` groups gets ``1/g`` of the
    resource; inside a group the power is split equally and every user is
    interfered with by the other members' beams. Users below ``sinr_min``
    contribute nothing.
    """
    if sinr_min < 0:
        raise ValueError("sinr_min must be >= 0")
    h = np.atleast_2d(np.asarray(channels, dtype=np.complex128))
    w = np.atleast_2d(np.asarray(beams, dtype=np.complex128))
    if isinstance(groups, GroupAssignment):
        groups = groups.members()
    groups = [list(g) for g in groups]
    if not groups:
        raise EmptyGroupError("no groups")
    if any(len(g) == 0 for g in groups):
        raise EmptyGroupError("empty group")
    # gains[u, v] = |<w_v, h_u>|^2
    gains = np.abs(h @ w.conj().T) ** 2
    total = 0.0
    for g in groups:
        p = total_power / len(g)
        idx = np.asarray(g)
        sub = gains[np.ix_(idx, idx)]
        signal = p * np.diag(sub)
        interference = p * (sub.sum(axis=1) - np.diag(sub))
        sinr = signal / (interference + noise_power)
        total += float(np.sum(np.where(sinr >= sinr_min, np.log2(1.0 + sinr), 0.0)))
    return total / len(groups)


def normalize_channels(h):
    """Scale a scene's channels so the mean per-antenna receive power is 1.

    With unit transmit power the configured SNR is then ``1/noise_power``
    before beamforming gain.
    """
    h = np.asarray(h, dtype=np.complex128)
    p = np.mean(np.abs(h) ** 2)
    if p == 0:
        raise ValueError("all channels are zero")
    return h / np.sqrt(p)


@dataclass(frozen=True)
class GroupingConfig:
    aps: ApsConfig
    sinr_min: float
    user_counts: tuple = (4, 8, 16, 32)
    scenes_per_count: int = 60
    snr_db: float = 10.0
    taus: tuple = (0.3,)
    scatterers_per_user: float = 0.5
    oversampling: int = 1
    modes: tuple = MODES

    def __post_init__(self):
        if self.sinr_min < 0:
            raise ValueError("sinr_min must be >= 0")
        if any(u < 1 for u in self.user_counts) or self.scenes_per_count < 1:
            raise ValueError("user counts and scenes_per_count must be >= 1")
        if any(not 0.0 <= t <= 1.0 for t in self.taus):
            raise ValueError("taus must lie in [0, 1]")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ValueError(f"unknown modes {sorted(unknown)}")


@dataclass(frozen=True)
class GroupingRow:
    user_count: int
    mode: str
    tau: float | None  # None for the baselines, which do not group
    mean_sum_rate: float
    ci95: float  # half-width of the normal-approximation interval


@dataclass(eq=False)
class GroupingReport:
    rows: list
    per_scene: dict  # (user_count, mode, tau) -> per-scene sum rates

    def lookup(self, user_count, mode, tau=None):
        for r in self.rows:
            if r.user_count == user_count and r.mode == mode and r.tau == tau:
                return r
        raise KeyError((user_count, mode, tau))


def _aps_beams(spectra, codebook, spacing):
    """Codeword nearest each spectrum's peak bin."""
    peaks = aps_grid(spectra.shape[1], spacing)[np.argmax(spectra, axis=1)]
    return nearest_codeword(peaks, codebook, spacing)


def _mean_ci(x):
    x = np.asarray(x, dtype=np.float64)
    half = 1.959963984540054 * x.std(ddof=1) / math.sqrt(len(x)) if len(x) > 1 else math.inf
    return float(x.mean()), float(half)


def evaluate_grouping_experiment(config: GroupingConfig, seed, aps_model=None) -> GroupingReport:
    """Mean sum rate per user count and mode over a scene ensemble.

    Baseline beams are the best codeword for each user's true channel.
    Grouping modes beam toward the APS peak (true or inferred) and colour the
    APS-overlap conflict graph once per threshold in ``config.taus``.
    """
    modes = config.modes
    if "inferred-aps" in modes and aps_model is None:
        raise ValueError("inferred-aps mode needs a trained APS model")
    aps_cfg = config.aps
    site = aps_cfg.scene.sites[[s.id for s in aps_cfg.scene.sites].index(aps_cfg.target_site)]
    spacing = site.array.spacing
    codebook = build_dft_codebook(site.array.num_elements, config.oversampling)
    noise = 10.0 ** (-config.snr_db / 10.0)
    per_scene = {}
    for u in config.user_counts:
        n_s = int(round(config.scatterers_per_user * u))
        scene_cfg = replace(aps_cfg.scene, num_users=u, num_scatterers=n_s)
        scenes = sample_ensemble(scene_cfg, config.scenes_per_count, [int(seed), int(u)])
        rng = np.random.default_rng([int(seed), int(u), 5])
        rates = {}
        for sc in scenes:
            src, tgt, h = scene_spectra(sc, aps_cfg, rng)
            h = normalize_channels(h)
            best = codebook.codewords[quantize(h, codebook)]
            if "all-at-once" in modes:
                rates.setdefault((u, "all-at-once", None), []).append(
                    sum_rate(h, [list(range(u))], best, 1.0, noise, config.sinr_min))
            if "orthogonal" in modes:
                rates.setdefault((u, "orthogonal", None), []).append(
                    sum_rate(h, [[i] for i in range(u)], best, 1.0, noise, config.sinr_min))
            spectra = {}
            if "true-aps" in modes:
                spectra["true-aps"] = tgt
            if "inferred-aps" in modes:
                spectra["inferred-aps"] = infer_aps(aps_model, src)
            for mode, spec in spectra.items():
                beams = codebook.codewords[_aps_beams(spec, codebook, spacing)]
                for tau in config.taus:
                    groups = greedy_color(build_conflict_graph(spec, tau))
                    rates.setdefault((u, mode, float(tau)), []).append(
                        sum_rate(h, groups, beams, 1.0, noise, config.sinr_min))
        per_scene.update({k: np.asarray(v) for k, v in rates.items()})
    rows = []
    for key in sorted(per_scene, key=lambda k: (k[0], MODES.index(k[1]), -1.0 if k[2] is None else k[2])):
        mean, half = _mean_ci(per_scene[key])
        rows.append(GroupingRow(key[0], key[1], key[2], mean, half))
    return GroupingReport(rows, per_scene)
