"""Geometry-based single-bounce multipath channel simulator.

A :class:`Scene` holds base-station sites with uniform linear arrays, point
scatterers and mobile single-antenna users in a 2-D plane. Every channel is
the sum of an optional line-of-sight path and one single-bounce path per
scatterer, so two sites that see the same scatterers (or the same user
position) get CSI that is dependent without being linearly correlated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .kernels import accumulate_paths

SPEED_OF_LIGHT = 299_792_458.0


class SceneError(ValueError):
    """Base class for scene construction and evaluation failures."""


class DomainError(SceneError):
    """Angle outside the front hemisphere of an array."""


class DegenerateGeometryError(SceneError):
    """Zero-length propagation leg (user on top of a site or scatterer)."""


class ConfigurationError(SceneError):
    pass


def wrap_angle(x):
    """Wrap to [-pi, pi)."""
    return (np.asarray(x) + np.pi) % (2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class ArrayGeometry:
    num_elements: int
    spacing: float = 0.5
    orientation: float = 0.0

    def __post_init__(self):
        if int(self.num_elements) != self.num_elements or self.num_elements < 1:
            raise SceneError(f"num_elements must be a positive integer, got {self.num_elements}")
        if not self.spacing > 0:
            raise SceneError(f"spacing must be positive, got {self.spacing}")
        if not -math.pi <= self.orientation < math.pi:
            raise SceneError(f"orientation must lie in [-pi, pi), got {self.orientation}")


@dataclass(frozen=True)
class Site:
    id: str
    position: tuple[float, float]
    array: ArrayGeometry
    carrier_wavelength: float

    def __post_init__(self):
        if not self.carrier_wavelength > 0:
            raise SceneError(f"site {self.id}: carrier_wavelength must be positive")
        object.__setattr__(self, "position", _pair(self.position))


@dataclass(frozen=True)
class Scatterer:
    position: tuple[float, float]
    reflectivity: complex = 1.0

    def __post_init__(self):
        object.__setattr__(self, "position", _pair(self.position))
        object.__setattr__(self, "reflectivity", complex(self.reflectivity))
        if abs(self.reflectivity) > 1.0 + 1e-12:
            raise SceneError(f"|reflectivity| must be <= 1, got {abs(self.reflectivity)}")


@dataclass(frozen=True)
class User:
    id: str
    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position", _pair(self.position))
        object.__setattr__(self, "velocity", _pair(self.velocity))

    def position_at(self, slot):
        return (self.position[0] + self.velocity[0] * slot,
                self.position[1] + self.velocity[1] * slot)


@dataclass(frozen=True)
class Scene:
    """Immutable world state; every channel is a pure function of it.

    ``los_enabled`` is either a single flag for every link or a mapping
    ``site_id -> flag``; sites missing from the mapping default to ``True``.
    ``subcarrier_offset`` is the fractional carrier offset between adjacent
    subcarrier indices.
    """
    sites: tuple[Site, ...]
    scatterers: tuple[Scatterer, ...] = ()
    users: tuple[User, ...] = ()
    pathloss_exponent: float = 2.0
    los_enabled: bool | Mapping[str, bool] = True
    noise_floor: float = 0.0
    rng_seed: int = 0
    subcarrier_offset: float = 0.0
    _site_index: dict = field(init=False, repr=False, compare=False)
    _user_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "scatterers", tuple(self.scatterers))
        object.__setattr__(self, "users", tuple(self.users))
        if not self.pathloss_exponent > 0:
            raise SceneError("pathloss_exponent must be positive")
        if self.noise_floor < 0:
            raise SceneError("noise_floor must be non-negative")
        site_ids = [s.id for s in self.sites]
        user_ids = [u.id for u in self.users]
        if len(set(site_ids)) != len(site_ids):
            raise SceneError(f"duplicate site ids: {site_ids}")
        if len(set(user_ids)) != len(user_ids):
            raise SceneError(f"duplicate user ids: {user_ids}")
        if not isinstance(self.los_enabled, bool):
            object.__setattr__(self, "los_enabled", {str(k): bool(v) for k, v in dict(self.los_enabled).items()})
        object.__setattr__(self, "_site_index", {s.id: s for s in self.sites})
        object.__setattr__(self, "_user_index", {u.id: u for u in self.users})

    def site(self, site_id) -> Site:
        try:
            return self._site_index[site_id]
        except KeyError:
            raise SceneError(f"unknown site id {site_id!r}") from None

    def user(self, user_id) -> User:
        try:
            return self._user_index[user_id]
        except KeyError:
            raise SceneError(f"unknown user id {user_id!r}") from None

    def los(self, site_id) -> bool:
        if isinstance(self.los_enabled, bool):
            return self.los_enabled
        return self.los_enabled.get(site_id, True)


@dataclass(frozen=True)
class CsiSample:
    site_id: str
    user_id: str
    slot: int
    subcarrier: int
    h: np.ndarray


def _pair(p):
    x, y = p
    return (float(x), float(y))


# ------------------------------------------------------------------ geometry

def steering_vector(array: ArrayGeometry, wavelength, angle, design_wavelength=None):
    """ULA response toward ``angle`` (radians, global frame).

    ``array.spacing`` is in multiples of ``design_wavelength`` (defaults to
    ``wavelength``), so at the design wavelength the phase of element ``n`` is
    ``2*pi*spacing*n*sin(angle - orientation)``.
    """
    if not wavelength > 0:
        raise DomainError("wavelength must be positive")
    rel = float(wrap_angle(angle - array.orientation))
    if abs(rel) > math.pi / 2 + 1e-12:
        raise DomainError(f"angle {angle} is behind the array (relative {rel})")
    ratio = 1.0 if design_wavelength is None else design_wavelength / wavelength
    n = np.arange(array.num_elements)
    return np.exp(1j * 2.0 * np.pi * array.spacing * ratio * n * math.sin(rel))


def path_arrays(scene: Scene, site_id, user_position, subcarrier=0):
    """Per-path complex gains and per-element phase slopes for one link.

    Returns ``(gains, slopes)``, each of length ``1 + len(scene.scatterers)``;
    index 0 is the LoS path (zero gain when disabled). Paths arriving from
    behind the array carry zero gain.
    """
    site = scene.site(site_id)
    lam = site.carrier_wavelength
    sx, sy = site.position
    ux, uy = user_position
    n_paths = 1 + len(scene.scatterers)
    gains = np.zeros(n_paths, dtype=np.complex128)
    slopes = np.zeros(n_paths)
    freq_scale = 1.0 + scene.subcarrier_offset * subcarrier
    amp_exp = scene.pathloss_exponent / 2.0
    two_pi_d = 2.0 * np.pi * site.array.spacing

    def add(p, refl, dist, ax, ay):
        if dist <= 0.0:
            raise DegenerateGeometryError(f"zero-length path at site {site_id}")
        rel = float(wrap_angle(math.atan2(ay - sy, ax - sx) - site.array.orientation))
        if abs(rel) > math.pi / 2:
            return
        gains[p] = refl * (lam / (4.0 * math.pi * dist)) ** amp_exp * np.exp(-1j * 2.0 * np.pi * dist * freq_scale / lam)
        slopes[p] = two_pi_d * math.sin(rel)

    d_los = math.hypot(ux - sx, uy - sy)
    if d_los == 0.0:
        raise DegenerateGeometryError(f"user co-located with site {site_id}")
    if scene.los(site_id):
        add(0, 1.0, d_los, ux, uy)
    for i, sc in enumerate(scene.scatterers, start=1):
        cx, cy = sc.position
        d1 = math.hypot(cx - sx, cy - sy)
        d2 = math.hypot(ux - cx, uy - cy)
        if d1 == 0.0 or d2 == 0.0:
            raise DegenerateGeometryError(f"scatterer {i - 1} co-located with site or user")
        add(i, sc.reflectivity, d1 + d2, cx, cy)
    return gains, slopes


def generate_channel(scene: Scene, site_id, user_id, slot=0, subcarrier=0) -> CsiSample:
    if slot < 0:
        raise SceneError("slot must be non-negative")
    site = scene.site(site_id)
    user = scene.user(user_id)
    gains, slopes = path_arrays(scene, site_id, user.position_at(slot), subcarrier)
    h = accumulate_paths(gains[None, :], slopes[None, :], site.array.num_elements)[0]
    return CsiSample(site_id, user_id, int(slot), int(subcarrier), h)


def channels_for_positions(scene: Scene, site_id, positions, subcarrier=0):
    """Channel matrix ``(len(positions), M)`` for hypothetical user positions in ``scene``."""
    site = scene.site(site_id)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n_paths = 1 + len(scene.scatterers)
    gains = np.zeros((len(positions), n_paths), dtype=np.complex128)
    slopes = np.zeros((len(positions), n_paths))
    for i, p in enumerate(positions):
        gains[i], slopes[i] = path_arrays(scene, site_id, p, subcarrier)
    return accumulate_paths(gains, slopes, site.array.num_elements)


def batch_channels(scenes: Sequence[Scene], site_id, user_id, slot=0, subcarrier=0):
    """Stack the channels of one link across many scenes into ``(len(scenes), M)``."""
    if not scenes:
        raise SceneError("no scenes given")
    m = scenes[0].site(site_id).array.num_elements
    width = max(1 + len(s.scatterers) for s in scenes)
    gains = np.zeros((len(scenes), width), dtype=np.complex128)
    slopes = np.zeros((len(scenes), width))
    for i, s in enumerate(scenes):
        if s.site(site_id).array.num_elements != m:
            raise SceneError("array size differs across scenes")
        g, k = path_arrays(s, site_id, s.user(user_id).position_at(slot), subcarrier)
        gains[i, :len(g)] = g
        slopes[i, :len(k)] = k
    return accumulate_paths(gains, slopes, m)


def evolve(scene: Scene, dt_slots: int) -> Scene:
    if dt_slots < 0:
        raise SceneError("dt_slots must be non-negative")
    if dt_slots == 0:
        return scene
    users = tuple(replace(u, position=u.position_at(dt_slots)) for u in scene.users)
    return replace(scene, users=users)


# ------------------------------------------------------------------ sampling

def _default_sites():
    f_mbs, f_sbs = 3.5e9, 28e9
    return (
        Site("mbs", (0.0, 0.0), ArrayGeometry(100, 0.5, math.pi / 2), SPEED_OF_LIGHT / f_mbs),
        Site("sbs", (500.0, 0.0), ArrayGeometry(20, 0.5, math.pi / 2), SPEED_OF_LIGHT / f_sbs),
    )


@dataclass(frozen=True)
class SceneConfig:
    """Distribution over scenes: fixed sites, random users and scatterers.

    Scatterers are drawn uniformly in a disc of ``scatterer_radius`` around the
    users (round-robin), or uniformly in ``scatterer_region`` when that is set.
    ``fixed_scatterers`` are appended to every draw unchanged. With
    ``hotspots > 0`` users cluster: hotspot centres are drawn in
    ``user_region`` and each user lands uniformly in a disc of
    ``hotspot_radius`` around a randomly chosen centre.
    """
    sites: tuple[Site, ...] = field(default_factory=_default_sites)
    user_region: tuple[tuple[float, float], tuple[float, float]] = ((150.0, 350.0), (100.0, 300.0))
    num_users: int = 1
    hotspots: int = 0
    hotspot_radius: float = 5.0
    velocity_region: tuple[tuple[float, float], tuple[float, float]] = ((0.0, 0.0), (0.0, 0.0))
    num_scatterers: int = 0
    scatterer_radius: float = 50.0
    scatterer_region: tuple[tuple[float, float], tuple[float, float]] | None = None
    reflectivity_range: tuple[float, float] = (0.1, 0.5)
    fixed_scatterers: tuple[Scatterer, ...] = ()
    pathloss_exponent: float = 2.0
    los_enabled: bool | Mapping[str, bool] = True
    noise_floor: float = 0.0
    subcarrier_offset: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "fixed_scatterers", tuple(self.fixed_scatterers))
        regions = [("user_region", self.user_region), ("velocity_region", self.velocity_region)]
        if self.scatterer_region is not None:
            regions.append(("scatterer_region", self.scatterer_region))
        for name, reg in regions:
            (x0, x1), (y0, y1) = reg
            if x1 < x0 or y1 < y0:
                raise ConfigurationError(f"{name} bounds are inverted: {reg}")
        for name, reg in regions[:1] + regions[2:]:
            (x0, x1), (y0, y1) = reg
            if x1 == x0 and y1 == y0:
                raise ConfigurationError(f"{name} is empty: {reg}")
        if self.hotspots < 0 or (self.hotspots and not self.hotspot_radius > 0):
            raise ConfigurationError("hotspots must be >= 0 with a positive hotspot_radius")
        if self.num_users < 0 or self.num_scatterers < 0:
            raise ConfigurationError("counts must be non-negative")
        if self.num_scatterers and self.scatterer_region is None and not self.scatterer_radius > 0:
            raise ConfigurationError("scatterer_radius must be positive")
        lo, hi = self.reflectivity_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigurationError("reflectivity_range must satisfy 0 <= lo <= hi <= 1")


def _uniform_box(rng, box, n):
    (x0, x1), (y0, y1) = box
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])


def sample_scene(config: SceneConfig, seed) -> Scene:
    rng = np.random.default_rng(seed)
    n_u = config.num_users
    if config.hotspots:
        centres = _uniform_box(rng, config.user_region, config.hotspots)
        pick = rng.integers(0, config.hotspots, n_u)
        r = config.hotspot_radius * np.sqrt(rng.uniform(0.0, 1.0, n_u))
        phi = rng.uniform(-np.pi, np.pi, n_u)
        pos = centres[pick] + np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    else:
        pos = _uniform_box(rng, config.user_region, n_u)
    vel = _uniform_box(rng, config.velocity_region, n_u)
    users = tuple(User(f"u{i}", tuple(pos[i]), tuple(vel[i])) for i in range(n_u))
    n_s = config.num_scatterers
    if n_s and config.scatterer_region is not None:
        spos = _uniform_box(rng, config.scatterer_region, n_s)
    elif n_s:
        if n_u == 0:
            raise ConfigurationError("scatterers around users need at least one user")
        r = config.scatterer_radius * np.sqrt(rng.uniform(0.0, 1.0, n_s))
        phi = rng.uniform(-np.pi, np.pi, n_s)
        anchor = pos[np.arange(n_s) % n_u]
        spos = anchor + np.column_stack([r * np.cos(phi), r * np.sin(phi)])
    else:
        spos = np.zeros((0, 2))
    lo, hi = config.reflectivity_range
    mag = rng.uniform(lo, hi, n_s)
    ph = rng.uniform(-np.pi, np.pi, n_s)
    scatterers = tuple(Scatterer(tuple(spos[i]), complex(mag[i] * np.exp(1j * ph[i]))) for i in range(n_s))
    return Scene(
        sites=config.sites,
        scatterers=config.fixed_scatterers + scatterers,
        users=users,
        pathloss_exponent=config.pathloss_exponent,
        los_enabled=config.los_enabled,
        noise_floor=config.noise_floor,
        rng_seed=int(seed),
        subcarrier_offset=config.subcarrier_offset,
    )


def sample_ensemble(config: SceneConfig, n, seed):
    """``n`` independent scene draws with child seeds spawned from ``seed``."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [sample_scene(config, int(c.generate_state(1, dtype=np.uint64)[0])) for c in children]


def observe(h, noise_floor, rng):
    """Noisy estimate ``h + CN(0, noise_floor)``."""
    h = np.asarray(h)
    if noise_floor <= 0:
        return h.copy()
    noise = rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)
    return h + np.sqrt(noise_floor / 2.0) * noise
