"""Dependence measures between quantised CSI at two sites, and the remote-AoA scaling study."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernels import golden_refine


class RankDeficientError(np.linalg.LinAlgError):
    """Covariance is singular and no ridge was requested."""


class GeometryError(ValueError):
    pass


# ------------------------------------------------------------ discrete laws

@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    counts: np.ndarray  # (K_a, K_b) non-negative integers

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2:
            raise ValueError("counts must be a 2-D matrix")
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise ValueError("counts must be non-negative integers")
        if c.sum() <= 0:
            raise ValueError("joint needs at least one sample")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def n(self):
        return int(self.counts.sum())

    @classmethod
    def from_samples(cls, a, b, k_a=None, k_b=None):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        if a.shape != b.shape or a.ndim != 1 or len(a) == 0:
            raise ValueError("a and b must be equal-length non-empty 1-D index arrays")
        k_a = int(a.max()) + 1 if k_a is None else k_a
        k_b = int(b.max()) + 1 if k_b is None else k_b
        flat = np.bincount(a * k_b + b, minlength=k_a * k_b)
        return cls(flat.reshape(k_a, k_b))


def _entropy_from_counts(counts):
    c = np.asarray(counts, dtype=np.float64).ravel()
    c = c[c > 0]
    p = c / c.sum()
    return float(-np.sum(p * np.log2(p)))


def plug_in_entropy(indices):
    """Empirical (plug-in) entropy in bits of a sequence of hashable symbols."""
    arr = np.asarray(indices)
    if arr.size == 0:
        raise ValueError("need at least one symbol")
    _, counts = np.unique(arr, return_counts=True, axis=0 if arr.ndim > 1 else None)
    return _entropy_from_counts(counts)


def mutual_information(joint: DiscreteJoint):
    """Plug-in mutual information in bits, ``H(A) + H(B) - H(A, B)``.

    Algebraically the same as summing ``p(a,b) log p(a,b)/(p(a)p(b))`` over
    non-empty cells, but this form makes ``I(X;X) = H(X)`` hold exactly in
    floating point. Round-off is clamped to the analytic bounds.
    """
    c = joint.counts
    h_a = _entropy_from_counts(c.sum(axis=1))
    h_b = _entropy_from_counts(c.sum(axis=0))
    mi = h_a + h_b - _entropy_from_counts(c)
    return min(max(mi, 0.0), h_a, h_b)


def joint_entropies(joint: DiscreteJoint):
    """``(H(A), H(B))`` of the marginals."""
    return (_entropy_from_counts(joint.counts.sum(axis=1)),
            _entropy_from_counts(joint.counts.sum(axis=0)))


# ---------------------------------------------------------- linear measure

def _inv_sqrt(cov, ridge):
    dim = cov.shape[0]
    reg = cov + ridge * np.trace(cov) / dim * np.eye(dim)
    w, v = np.linalg.eigh(reg)
    if ridge == 0 and (w.min() <= w.max() * dim * np.finfo(float).eps or w.max() <= 0):
        raise RankDeficientError("covariance is rank deficient; use a positive ridge")
    return (v / np.sqrt(w)) @ v.T


def canonical_correlations(x, y, ridge=1e-6):
    """Canonical correlation coefficients of the column spaces of ``x`` and ``y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError("x and y must be 2-D with the same number of rows")
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    cxx = xc.T @ xc / (n - 1)
    cyy = yc.T @ yc / (n - 1)
    cxy = xc.T @ yc / (n - 1)
    t = _inv_sqrt(cxx, ridge) @ cxy @ _inv_sqrt(cyy, ridge)
    s = np.linalg.svd(t, compute_uv=False)
    return np.clip(s[:min(x.shape[1], y.shape[1])], 0.0, 1.0)


def avg_canonical_correlation(x, y, ridge=1e-6):
    return float(np.mean(canonical_correlations(x, y, ridge)))


def stack_complex(h):
    """Real/imaginary concatenation ``[Re h, Im h]`` along the last axis."""
    h = np.asarray(h)
    return np.concatenate([h.real, h.imag], axis=-1)


# ----------------------------------------------------- remote AoA scaling

@dataclass(frozen=True)
class AoaGeometry:
    """Pure-LoS layout for the remote-AoA study.

    ``known_sites`` lists ``(x, y, orientation)`` of the sites whose CSI is
    observed; ``target_site`` is the site whose AoA is inferred. Users are
    drawn uniformly in ``user_region`` for every trial.
    """
    known_sites: tuple = ((0.0, 0.0, math.pi / 2), (400.0, 0.0, math.pi / 2))
    target_site: tuple = (200.0, -50.0, math.pi / 2)
    user_region: tuple = ((100.0, 300.0), (100.0, 300.0))
    wavelength: float = 0.1
    spacing: float = 0.5
    min_bearing_sine: float = 0.05


@dataclass
class ScalingReport:
    mode: str
    m_values: list
    mse_values: list
    fitted_slope: float
    trials: int
    discarded: list = field(default_factory=list)


def ml_aoa(y, spacing=0.5, coarse_grid=1024, tol=1e-6):
    """Single-source ML direction estimate per row of ``y``, as a sine of the relative angle.

    Coarse scan on a uniform sine grid, then golden-section refinement within
    one grid step either side of the best coarse point.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    m = y.shape[1]
    period = 1.0 / spacing
    u = -period / 2 + period * np.arange(coarse_grid) / coarse_grid
    a = np.exp(1j * 2.0 * np.pi * spacing * np.arange(m)[:, None] * u[None, :])
    best = np.argmax(np.abs(y @ a.conj()), axis=1)
    step = period / coarse_grid
    u0 = u[best]
    u_hat = golden_refine(y, spacing, u0 - step, u0 + step, tol)
    return np.clip(u_hat, -1.0, 1.0)


def _bearing(src_xy, dst_xy):
    d = dst_xy - src_xy
    return np.arctan2(d[..., 1], d[..., 0])


def _wrap(x):
    return (x + np.pi) % (2.0 * np.pi) - np.pi


def _one_mode(geometry: AoaGeometry, m, snr_lin, trials, mode, rng, noiseless=False):
    lam = geometry.wavelength
    (x0, x1), (y0, y1) = geometry.user_region
    users = np.column_stack([rng.uniform(x0, x1, trials), rng.uniform(y0, y1, trials)])
    sites = geometry.known_sites if mode == "two-site" else geometry.known_sites[:1]
    n = np.arange(m)
    bearings_hat = []
    amps_hat = []
    for sx, sy, orient in sites:
        s_xy = np.array([sx, sy])
        d = np.linalg.norm(users - s_xy, axis=1)
        rel = _wrap(_bearing(s_xy, users) - orient)
        if np.any(np.abs(rel) >= np.pi / 2):
            raise GeometryError("user region extends behind a known site")
        alpha = lam / (4.0 * np.pi * d) * np.exp(-1j * 2.0 * np.pi * d / lam)
        y = alpha[:, None] * np.exp(1j * 2.0 * np.pi * geometry.spacing * np.sin(rel)[:, None] * n[None, :])
        if not noiseless:
            sigma = np.abs(alpha) / np.sqrt(snr_lin)
            noise = rng.standard_normal((trials, m)) + 1j * rng.standard_normal((trials, m))
            y = y + (sigma / np.sqrt(2.0))[:, None] * noise
        u_hat = ml_aoa(y, geometry.spacing)
        bearings_hat.append(orient + np.arcsin(u_hat))
        steer = np.exp(1j * 2.0 * np.pi * geometry.spacing * u_hat[:, None] * n[None, :])
        amps_hat.append(np.abs(np.sum(np.conj(steer) * y, axis=1)) / m)

    p1 = np.array(sites[0][:2])
    if mode == "two-site":
        p2 = np.array(sites[1][:2])
        d1 = np.column_stack([np.cos(bearings_hat[0]), np.sin(bearings_hat[0])])
        d2 = np.column_stack([np.cos(bearings_hat[1]), np.sin(bearings_hat[1])])
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        keep = np.abs(cross) >= geometry.min_bearing_sine
        diff = p2 - p1
        safe = np.where(keep, cross, 1.0)
        t1 = (diff[0] * d2[:, 1] - diff[1] * d2[:, 0]) / safe
        est = p1 + t1[:, None] * d1
    else:
        keep = np.ones(trials, dtype=bool)
        rng_hat = lam / (4.0 * np.pi * amps_hat[0])
        est = p1 + rng_hat[:, None] * np.column_stack([np.cos(bearings_hat[0]), np.sin(bearings_hat[0])])

    tx, ty, _ = geometry.target_site
    t_xy = np.array([tx, ty])
    err = _wrap(_bearing(t_xy, est) - _bearing(t_xy, users))
    return err[keep], int(trials - keep.sum())


def remote_aoa_scaling(geometry: AoaGeometry, m_values, snr_db=10.0, trials=2000, mode="two-site",
                       seed=0, noiseless=False) -> ScalingReport:
    """Monte-Carlo MSE of the inferred AoA at the target site versus array size.

    ``mode`` is ``"two-site"`` (triangulate from two ML bearings) or
    ``"one-site"`` (one ML bearing plus free-space ranging from the estimated
    amplitude). The slope is a least-squares fit of ``log MSE`` on ``log M``.
    """
    if mode not in ("two-site", "one-site"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "two-site" and len(geometry.known_sites) < 2:
        raise GeometryError("two-site mode needs two known sites")
    m_values = [int(m) for m in m_values]
    if any(b <= a for a, b in zip(m_values, m_values[1:])):
        raise ValueError("m_values must be strictly increasing")
    snr_lin = 10.0 ** (snr_db / 10.0)
    mses, dropped = [], []
    for m in m_values:
        rng = np.random.default_rng([seed, m, 0 if mode == "two-site" else 1])
        err, n_drop = _one_mode(geometry, m, snr_lin, trials, mode, rng, noiseless)
        if n_drop > 0.1 * trials:
            raise GeometryError(f"{n_drop}/{trials} trials had near-parallel bearings at M={m}")
        mses.append(float(np.mean(err ** 2)))
        dropped.append(n_drop)
    if len(m_values) >= 2 and all(v > 0 for v in mses):
        slope = float(np.polyfit(np.log(m_values), np.log(mses), 1)[0])
    else:
        slope = float("nan")
    return ScalingReport(mode, m_values, mses, slope, trials, dropped)
