"""Strict YAML experiment configuration.

Every section is validated against a fixed schema: unknown keys are
rejected, every problem is collected before failing, and the seed, the
codebook oversampling and (for grouping) the SINR threshold must be given
explicitly. Everything else has a documented default that is written back
out by :func:`config_to_dict`, so a parsed config serialises to a file that
parses to an equal config.
"""
from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .families import FAMILIES
from .scene import ConfigurationError as SceneConfigurationError
from .scene import SceneConfig

KINDS = ("dependence", "static", "sequence", "grouping", "scaling")
REQUIRED = object()


class ConfigError(ValueError):
    """All validation problems found in one config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


# ---------------------------------------------------------------- converters


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _pos_int(v):
    v = _int(v)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _nonneg_int(v):
    v = _int(v)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    v = float(v)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _pos_float(v):
    v = _float(v)
    if v <= 0:
        raise ValueError("must be > 0")
    return v


def _nonneg_float(v):
    v = _float(v)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _unit(v):
    v = _float(v)
    if not 0.0 <= v <= 1.0:
        raise ValueError("must lie in [0, 1]")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _str(v):
    if not isinstance(v, str) or not v:
        raise TypeError("expected a non-empty string")
    return v


def _list(item, min_len=1):
    def conv(v):
        if not isinstance(v, (list, tuple)) or len(v) < min_len:
            raise TypeError(f"expected a list with at least {min_len} item(s)")
        return [item(x) for x in v]
    return conv


def _choice(*options):
    def conv(v):
        if v not in options:
            raise ValueError(f"must be one of {list(options)}")
        return v
    return conv


def _choices(*options):
    def conv(v):
        v = _list(_str)(v)
        bad = [x for x in v if x not in options]
        if bad:
            raise ValueError(f"unknown entries {bad}; allowed {list(options)}")
        return v
    return conv


def _pair(v):
    v = _list(_float, 2)(v)
    if len(v) != 2:
        raise ValueError("expected two numbers")
    return v


def _box(v):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise TypeError("expected [[x0, x1], [y0, y1]]")
    return [_pair(r) for r in v]


def _box_or_null(v):
    return None if v is None else _box(v)


def _los(v):
    if isinstance(v, bool):
        return v
    if isinstance(v, dict) and all(isinstance(k, str) and isinstance(b, bool) for k, b in v.items()):
        return dict(v)
    raise TypeError("expected a boolean or a mapping site id -> boolean")


def _scatterers(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of {position, reflectivity}")
    out = []
    for s in v:
        if not isinstance(s, dict) or set(s) - {"position", "reflectivity"} or "position" not in s:
            raise ValueError("each scatterer needs position and reflectivity")
        r = s.get("reflectivity", 1.0)
        if isinstance(r, dict):
            r = {"re": _float(r.get("re", 0.0)), "im": _float(r.get("im", 0.0))}
        else:
            r = {"re": _float(r), "im": 0.0}
        out.append({"position": _pair(s["position"]), "reflectivity": r})
    return out


def _sites(v):
    from .io import site_from_dict, site_to_dict
    if not isinstance(v, list) or not v:
        raise TypeError("expected a non-empty list of sites")
    try:
        return [site_to_dict(site_from_dict(s)) for s in v]
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed site ({e})") from None


# ---------------------------------------------------------------- schemas

SCENE_KEYS = {
    "family": (_choice(*FAMILIES), REQUIRED),
    "sites": (_sites, None),
    "user_region": (_box, None),
    "num_users": (_nonneg_int, None),
    "hotspots": (_nonneg_int, None),
    "hotspot_radius": (_pos_float, None),
    "velocity_region": (_box, None),
    "num_scatterers": (_nonneg_int, None),
    "scatterer_radius": (_pos_float, None),
    "scatterer_region": (_box_or_null, None),
    "reflectivity_range": (_pair, None),
    "fixed_scatterers": (_scatterers, None),
    "pathloss_exponent": (_pos_float, None),
    "los_enabled": (_los, None),
    "noise_floor": (_nonneg_float, None),
    "subcarrier_offset": (_float, None),
}

GEOMETRY_KEYS = {
    "known_sites": (_list(_list(_float, 3)), [[0.0, 0.0, math.pi / 2], [400.0, 0.0, math.pi / 2]]),
    "target_site": (_list(_float, 3), [200.0, -50.0, math.pi / 2]),
    "user_region": (_box, [[100.0, 300.0], [100.0, 300.0]]),
    "wavelength": (_pos_float, 0.1),
    "spacing": (_pos_float, 0.5),
    "min_bearing_sine": (_unit, 0.05),
}


def _training(lr=1e-3, epochs=20, batch=64):
    return {
        "learning_rate": (_pos_float, lr),
        "batch_size": (_pos_int, batch),
        "epochs": (_pos_int, epochs),
        "optimizer": (_choice("adam", "sgd"), "adam"),
        "patience": (_nonneg_int, 0),
        "lr_decay": (_pos_float, 1.0),
    }


SCHEMAS = {
    "dependence": {
        "scene": "street",
        "features": {"oversampling": (_pos_int, REQUIRED), "source_site": (_str, "mbs"),
                     "target_site": (_str, "sbs")},
        "evaluation": {"sample_counts": (_list(_pos_int), [1000, 5000, 20000]),
                       "ridge": (_nonneg_float, 1e-6)},
    },
    "static": {
        "scene": "street",
        "features": {"oversampling": (_pos_int, REQUIRED), "source_sites": (_list(_str), ["mbs"]),
                     "target_site": (_str, "sbs")},
        "model": {"hidden": (_list(_pos_int), [100, 100, 100]), "oracle": (_bool, False)},
        "training": _training(epochs=30),
        "evaluation": {"n_train": (_pos_int, 20000), "n_test": (_pos_int, 5000)},
    },
    "sequence": {
        "scene": "mobility",
        "features": {"oversampling": (_pos_int, REQUIRED), "source_site": (_str, "mbs"),
                     "target_site": (_str, "rsu"), "l_in": (_pos_int, 4), "l_out": (_pos_int, 6),
                     "delays": (_list(_nonneg_int), [1, 2, 3, 4, 5])},
        "model": {"hidden": (_pos_int, 64), "mlp_hidden": (_list(_pos_int), [100, 100, 100]),
                  "oracle": (_bool, False)},
        "training": {**_training(lr=3e-3, epochs=40), "mlp_epochs": (_pos_int, 30),
                     "mlp_learning_rate": (_pos_float, 1e-3)},
        "evaluation": {"n_trajectories": (_pos_int, 3000), "windows_per_trajectory": (_pos_int, 8),
                       "train_fraction": (_unit, 0.8), "lo_std": (_nonneg_float, 1.0)},
    },
    "grouping": {
        "scene": "grouping",
        "features": {"oversampling": (_pos_int, REQUIRED), "source_site": (_str, "mbs"),
                     "target_site": (_str, "sbs"), "source_grid": (_pos_int, 256),
                     "target_grid": (_pos_int, 1024), "snapshots": (_pos_int, 4),
                     "jitter_radius": (_nonneg_float, 1.0)},
        "model": {"hidden": (_list(_pos_int), [100, 100, 100])},
        "training": _training(epochs=20),
        "evaluation": {"n_train": (_pos_int, 10000), "user_counts": (_list(_pos_int), [4, 8, 16, 32]),
                       "scenes_per_count": (_pos_int, 60), "snr_db": (_float, 10.0),
                       "sinr_min": (_nonneg_float, REQUIRED), "taus": (_list(_unit), [0.3]),
                       "scatterers_per_user": (_nonneg_float, 0.5),
                       "modes": (_choices("inferred-aps", "true-aps", "all-at-once", "orthogonal"),
                                 ["inferred-aps", "true-aps", "all-at-once", "orthogonal"])},
    },
    "scaling": {
        "geometry": GEOMETRY_KEYS,
        "evaluation": {"m_values": (_list(_pos_int, 2), [8, 16, 32, 64, 128]), "snr_db": (_float, 10.0),
                       "trials": (_pos_int, 2000), "modes": (_choices("two-site", "one-site"),
                                                               ["two-site", "one-site"])},
    },
}

TOP_KEYS = ("kind", "seed", "output_dir", "scene", "features", "model", "training", "evaluation", "geometry")


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    output_dir: str | None = None
    scene: dict = field(default_factory=dict)
    features: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    evaluation: dict = field(default_factory=dict)
    geometry: dict = field(default_factory=dict)


def _check_section(raw, schema, name, errors):
    out = {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        errors.append(f"{name}: expected a mapping")
        return out
    for key in raw:
        if key not in schema:
            errors.append(f"{name}.{key}: unknown key in section '{name}'")
    for key, (conv, default) in schema.items():
        if key not in raw:
            if default is REQUIRED:
                errors.append(f"{name}.{key}: required and has no default")
            elif default is not None:
                out[key] = copy.deepcopy(default)
            continue
        try:
            out[key] = conv(raw[key])
        except (TypeError, ValueError) as e:
            errors.append(f"{name}.{key}: {e}")
    return out


def parse_config_dict(raw) -> ExperimentConfig:
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError(["top level: expected a mapping"])
    for key in raw:
        if key not in TOP_KEYS:
            errors.append(f"{key}: unknown top-level key")
    kind = raw.get("kind")
    if kind not in KINDS:
        errors.append(f"kind: must be one of {list(KINDS)}, got {kind!r}")
        raise ConfigError(errors)
    seed = raw.get("seed")
    if "seed" not in raw:
        errors.append("seed: required and has no default")
    elif isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        errors.append("seed: expected a non-negative integer")
    out_dir = raw.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        errors.append("output_dir: expected a string")
    schema = SCHEMAS[kind]
    cfg = ExperimentConfig(kind, seed if isinstance(seed, int) else 0, out_dir)
    for section in ("scene", "features", "model", "training", "evaluation", "geometry"):
        if section not in schema:
            if raw.get(section) not in (None, {}):
                errors.append(f"{section}: section not used by kind '{kind}'")
            continue
        if section == "scene":
            scene_raw = raw.get("scene") or {}
            if isinstance(scene_raw, dict) and "family" not in scene_raw:
                scene_raw = {"family": schema["scene"], **scene_raw}
            value = _check_section(scene_raw, SCENE_KEYS, "scene", errors)
        else:
            value = _check_section(raw.get(section), schema[section], section, errors)
        setattr(cfg, section, value)
    if not errors and "scene" in schema:
        try:
            scene_config(cfg)
        except (SceneConfigurationError, ValueError, TypeError) as e:
            errors.append(f"scene: {e}")
    if not errors and kind == "sequence":
        f = cfg.features
        if max(f["delays"]) > f["l_out"] - 1:
            errors.append(f"features.delays: largest delay {max(f['delays'])} needs l_out >= {max(f['delays']) + 1}")
    if errors:
        raise ConfigError(errors)
    return cfg


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"{path}: no such file"])
    try:
        raw = yaml.safe_load(p.read_text())
    except yaml.YAMLError as e:
        raise ConfigError([f"{path}: not valid YAML ({e})"]) from None
    return parse_config_dict(raw)


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {"kind": cfg.kind, "seed": cfg.seed}
    if cfg.output_dir is not None:
        out["output_dir"] = cfg.output_dir
    for section in ("scene", "geometry", "features", "model", "training", "evaluation"):
        if section in SCHEMAS[cfg.kind]:
            out[section] = copy.deepcopy(getattr(cfg, section))
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def scene_config(cfg: ExperimentConfig) -> SceneConfig:
    """The family's SceneConfig with the config's overrides applied."""
    from .io import scatterer_from_dict, site_from_dict
    s = dict(cfg.scene)
    base = FAMILIES[s.pop("family")]()
    kw = {}
    for key, value in s.items():
        if key == "sites":
            kw[key] = tuple(site_from_dict(d) for d in value)
        elif key == "fixed_scatterers":
            kw[key] = tuple(scatterer_from_dict(d) for d in value)
        elif key in ("user_region", "velocity_region", "scatterer_region"):
            kw[key] = None if value is None else tuple(tuple(r) for r in value)
        elif key == "reflectivity_range":
            kw[key] = tuple(value)
        else:
            kw[key] = value
    return dataclasses.replace(base, **kw)
