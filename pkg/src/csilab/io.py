"""Text persistence: datasets, model checkpoints, scene files and CSV reports.

Floats are written with ``repr`` (shortest round-trip form), so reading a
file and writing it again reproduces it byte for byte.
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from pathlib import Path

import numpy as np
import yaml

from .neural import GruSeq2Seq, MlpModel
from .scene import ArrayGeometry, Scatterer, Scene, Site, User
from .tasks.aps import ApsDataset
from .tasks.sequence import SequenceDataset
from .tasks.static import StaticDataset

DATASET_MAGIC = "csilab-dataset"
MODEL_MAGIC = "csilab-model"
FORMAT_VERSION = 1
DTYPES = {"float64": np.float64, "int64": np.int64, "complex128": np.complex128}


class PersistenceError(ValueError):
    pass


class CorruptFileError(PersistenceError):
    pass


class VersionError(PersistenceError):
    pass


def _fmt(x):
    return repr(float(x))


def _header(lines, magic, path):
    if not lines:
        raise CorruptFileError(f"{path}: empty file")
    parts = lines[0].split()
    if len(parts) != 2 or parts[0] != magic:
        raise CorruptFileError(f"{path}: not a {magic} file")
    try:
        version = int(parts[1])
    except ValueError:
        raise CorruptFileError(f"{path}: bad version field {parts[1]!r}") from None
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version}, this build reads {FORMAT_VERSION}")


def _keyed(line, key, path):
    if not line.startswith(key + " "):
        raise CorruptFileError(f"{path}: expected {key!r} line, got {line[:40]!r}")
    return line[len(key) + 1:]


# ---------------------------------------------------------------- arrays


def _flat_reals(a):
    a = np.asarray(a)
    width = int(np.prod(a.shape[1:], dtype=np.int64))
    if np.iscomplexobj(a):
        return np.stack([a.real, a.imag], axis=-1).reshape(a.shape[0], 2 * width)
    return a.reshape(a.shape[0], width)


def save_arrays(path, arrays: dict, metadata: dict):
    """Write named arrays that share a leading record axis."""
    names = list(arrays)
    n = len(arrays[names[0]]) if names else 0
    schema = []
    blocks = []
    for name in names:
        a = np.asarray(arrays[name])
        if len(a) != n:
            raise ValueError(f"array {name!r} has {len(a)} records, expected {n}")
        kind = "complex128" if np.iscomplexobj(a) else "int64" if a.dtype.kind in "iub" else "float64"
        schema.append({"name": name, "dtype": kind, "shape": list(a.shape[1:])})
        blocks.append((kind, _flat_reals(a.astype(DTYPES[kind]))))
    out = [f"{DATASET_MAGIC} {FORMAT_VERSION}",
           "metadata " + json.dumps(metadata, sort_keys=True),
           "schema " + json.dumps(schema),
           f"records {n}"]
    for i in range(n):
        fields = []
        for kind, b in blocks:
            row = b[i].tolist()
            fields.append(" ".join(str(int(v)) for v in row) if kind == "int64" else " ".join(map(_fmt, row)))
        out.append(" | ".join(fields))
    out.append("end")
    Path(path).write_text("\n".join(out) + "\n")


def load_arrays(path):
    """Inverse of :func:`save_arrays`; returns ``(arrays, metadata)``."""
    text = Path(path).read_text()
    lines = text.split("\n")
    _header(lines, DATASET_MAGIC, path)
    if len(lines) < 5:
        raise CorruptFileError(f"{path}: truncated header")
    try:
        metadata = json.loads(_keyed(lines[1], "metadata", path))
        schema = json.loads(_keyed(lines[2], "schema", path))
        n = int(_keyed(lines[3], "records", path))
    except (json.JSONDecodeError, ValueError) as e:
        if isinstance(e, PersistenceError):
            raise
        raise CorruptFileError(f"{path}: malformed header ({e})") from None
    body = lines[4:4 + n]
    if len(body) != n or len(lines) < 5 + n or lines[4 + n] != "end":
        raise CorruptFileError(f"{path}: expected {n} records followed by 'end' (file truncated?)")
    widths = []
    for f in schema:
        w = int(np.prod(f["shape"], dtype=np.int64))
        widths.append(2 * w if f["dtype"] == "complex128" else w)
    cols = [[] for _ in schema]
    for r, line in enumerate(body):
        parts = line.split(" | ") if schema else []
        if len(parts) != len(schema):
            raise CorruptFileError(f"{path}: record {r} has {len(parts)} fields, schema has {len(schema)}")
        for j, (f, part) in enumerate(zip(schema, parts)):
            toks = part.split(" ") if widths[j] else []
            if len(toks) != widths[j]:
                raise CorruptFileError(f"{path}: record {r} field {f['name']!r} has {len(toks)} values")
            try:
                cols[j].append([int(t) for t in toks] if f["dtype"] == "int64" else [float(t) for t in toks])
            except ValueError:
                raise CorruptFileError(f"{path}: record {r} field {f['name']!r} is not numeric") from None
    arrays = {}
    for f, c, w in zip(schema, cols, widths):
        kind = f["dtype"]
        if kind not in DTYPES:
            raise CorruptFileError(f"{path}: unknown dtype {kind!r}")
        flat = np.array(c, dtype=np.int64 if kind == "int64" else np.float64).reshape(n, w)
        if kind == "complex128":
            z = np.empty((n, w // 2), dtype=np.complex128)
            z.real, z.imag = flat[:, 0::2], flat[:, 1::2]  # arithmetic would turn inf parts into nan
            flat = z
        arrays[f["name"]] = flat.reshape([n, *f["shape"]])
    return arrays, metadata


_DATASET_FIELDS = {
    "static": (StaticDataset, ("features", "targets", "channels")),
    "sequence": (SequenceDataset, ("inputs", "targets", "channels", "delays", "positions", "trajectory")),
    "aps": (ApsDataset, ("source_aps", "target_aps", "target_channels")),
}


def save_dataset(path, dataset):
    for kind, (cls, names) in _DATASET_FIELDS.items():
        if isinstance(dataset, cls):
            meta = dict(dataset.metadata)
            meta["kind"] = kind
            save_arrays(path, {n: getattr(dataset, n) for n in names}, meta)
            return
    raise TypeError(f"cannot persist {type(dataset).__name__}")


def load_dataset(path):
    arrays, meta = load_arrays(path)
    kind = meta.get("kind")
    if kind not in _DATASET_FIELDS:
        raise CorruptFileError(f"{path}: unknown dataset kind {kind!r}")
    cls, names = _DATASET_FIELDS[kind]
    missing = [n for n in names if n not in arrays]
    if missing:
        raise CorruptFileError(f"{path}: missing fields {missing}")
    return cls(*[arrays[n] for n in names], metadata=meta)


# ---------------------------------------------------------------- models


def save_model(path, model, metadata=None):
    """Text checkpoint; ``metadata`` (JSON-serialisable) is stored on its own line."""
    if isinstance(model, MlpModel):
        arch = "mlp"
    elif isinstance(model, GruSeq2Seq):
        arch = "gru"
    else:
        raise TypeError(f"cannot persist {type(model).__name__}")
    out = [f"{MODEL_MAGIC} {FORMAT_VERSION}",
           f"arch {arch}",
           f"head {model.head}",
           f"seed {int(model.seed)}",
           "dims " + " ".join(str(int(d)) for d in model.layer_dims),
           "meta " + json.dumps(metadata or {}, sort_keys=True)]
    for name, p in zip(model.param_names(), model.params):
        out.append(f"param {name} " + " ".join(str(s) for s in p.shape))
        out.append(" ".join(map(_fmt, p.ravel().tolist())))
    out.append("end")
    Path(path).write_text("\n".join(out) + "\n")


def load_model(path):
    lines = Path(path).read_text().split("\n")
    _header(lines, MODEL_MAGIC, path)
    try:
        arch = _keyed(lines[1], "arch", path)
        head = _keyed(lines[2], "head", path)
        seed = int(_keyed(lines[3], "seed", path))
        dims = [int(t) for t in _keyed(lines[4], "dims", path).split()]
        json.loads(_keyed(lines[5], "meta", path))
        params, i = [], 6
        while lines[i] != "end":
            meta = _keyed(lines[i], "param", path).split()
            shape = tuple(int(t) for t in meta[1:])
            vals = [float(t) for t in lines[i + 1].split()] if lines[i + 1] else []
            if len(vals) != math.prod(shape):
                raise CorruptFileError(f"{path}: parameter {meta[0]} has {len(vals)} values, expected {math.prod(shape)}")
            params.append(np.array(vals, dtype=np.float64).reshape(shape))
            i += 2
    except (IndexError, json.JSONDecodeError):
        raise CorruptFileError(f"{path}: truncated checkpoint") from None
    except ValueError as e:
        if isinstance(e, PersistenceError):
            raise
        raise CorruptFileError(f"{path}: malformed checkpoint ({e})") from None
    try:
        if arch == "mlp":
            return MlpModel(dims, params[0::2], params[1::2], head, seed)
        if arch == "gru":
            return GruSeq2Seq(dims[0], dims[1], dims[2], params, head, seed)
    except (ValueError, IndexError) as e:
        raise CorruptFileError(f"{path}: inconsistent checkpoint ({e})") from None
    raise CorruptFileError(f"{path}: unknown architecture {arch!r}")


def read_model_metadata(path) -> dict:
    lines = Path(path).read_text().split("\n")
    _header(lines, MODEL_MAGIC, path)
    if len(lines) < 6:
        raise CorruptFileError(f"{path}: truncated checkpoint")
    return json.loads(_keyed(lines[5], "meta", path))


# ---------------------------------------------------------------- scenes


def _complex_out(z):
    z = complex(z)
    return {"re": z.real, "im": z.imag}


def _complex_in(v):
    if isinstance(v, dict):
        return complex(float(v.get("re", 0.0)), float(v.get("im", 0.0)))
    return complex(v)


def site_to_dict(s: Site):
    return {"id": s.id, "position": [float(c) for c in s.position],
            "array": {"num_elements": s.array.num_elements, "spacing": float(s.array.spacing),
                      "orientation": float(s.array.orientation)},
            "carrier_wavelength": float(s.carrier_wavelength)}


def site_from_dict(d) -> Site:
    a = d["array"]
    return Site(str(d["id"]), tuple(float(c) for c in d["position"]),
                ArrayGeometry(int(a["num_elements"]), float(a.get("spacing", 0.5)), float(a.get("orientation", 0.0))),
                float(d["carrier_wavelength"]))


def scatterer_to_dict(s: Scatterer):
    return {"position": [float(c) for c in s.position], "reflectivity": _complex_out(s.reflectivity)}


def scatterer_from_dict(d) -> Scatterer:
    return Scatterer(tuple(float(c) for c in d["position"]), _complex_in(d["reflectivity"]))


def scene_to_dict(scene: Scene):
    los = scene.los_enabled if isinstance(scene.los_enabled, bool) else dict(scene.los_enabled)
    return {
        "sites": [site_to_dict(s) for s in scene.sites],
        "scatterers": [scatterer_to_dict(s) for s in scene.scatterers],
        "users": [{"id": u.id, "position": [float(c) for c in u.position],
                   "velocity": [float(c) for c in u.velocity]} for u in scene.users],
        "pathloss_exponent": float(scene.pathloss_exponent),
        "los_enabled": los,
        "noise_floor": float(scene.noise_floor),
        "rng_seed": int(scene.rng_seed),
        "subcarrier_offset": float(scene.subcarrier_offset),
    }


def scene_from_dict(d) -> Scene:
    return Scene(
        sites=tuple(site_from_dict(s) for s in d["sites"]),
        scatterers=tuple(scatterer_from_dict(s) for s in d.get("scatterers", [])),
        users=tuple(User(str(u["id"]), tuple(float(c) for c in u["position"]),
                         tuple(float(c) for c in u.get("velocity", (0.0, 0.0)))) for u in d.get("users", [])),
        pathloss_exponent=float(d.get("pathloss_exponent", 2.0)),
        los_enabled=d.get("los_enabled", True),
        noise_floor=float(d.get("noise_floor", 0.0)),
        rng_seed=int(d.get("rng_seed", 0)),
        subcarrier_offset=float(d.get("subcarrier_offset", 0.0)),
    )


def save_scene(path, scene: Scene):
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))


def load_scene(path) -> Scene:
    return scene_from_dict(yaml.safe_load(Path(path).read_text()))


# ---------------------------------------------------------------- reports


def config_hash(obj) -> str:
    """Short sha256 of a JSON-serialisable object in canonical key order."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def format_csv(columns, rows, config_digest, seed) -> str:
    buf = _io.StringIO()
    buf.write(f"# config_hash={config_digest} seed={int(seed)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_csv(path, columns, rows, config_digest, seed):
    """CSV report whose first line records the config hash and master seed."""
    Path(path).write_text(format_csv(columns, rows, config_digest, seed))


def read_csv(path):
    """``(provenance dict, header, rows)``; cells are returned as strings."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise CorruptFileError(f"{path}: missing provenance line")
    prov = dict(kv.split("=", 1) for kv in lines[0][2:].split())
    rows = list(csv.reader(lines[1:]))
    return prov, rows[0], rows[1:]
