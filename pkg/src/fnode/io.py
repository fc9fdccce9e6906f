"""On-disk formats for datasets, checkpoints and CSV tables.

Binary files share one container layout: an 8-byte little-endian header
length, a UTF-8 JSON header with sorted keys, then each declared array as
a row-major block of little-endian float64 values in header order.  Every
write goes to a temporary file in the target directory and is renamed into
place.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInputError
from .grf import GrfConfig
from .nn import MlpModel
from .spectral import Grid1D, Grid2D
from .systems import SystemKind, SystemSpec, TimeSeriesDataset

DATASET_FORMAT = "fnode-dataset"
CHECKPOINT_FORMAT = "fnode-checkpoint"
FORMAT_VERSION = 1
_LEN = struct.Struct("<Q")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


# -- container ----------------------------------------------------------------


def pack_container(header: dict, arrays: list[tuple[str, np.ndarray]]) -> bytes:
    header = dict(header)
    header["dtype"] = "<f8"
    header["endianness"] = "little"
    header["arrays"] = [{"name": name, "shape": list(np.shape(a))} for name, a in arrays]
    head = canonical_json(header).encode("utf-8")
    parts = [_LEN.pack(len(head)), head]
    parts.extend(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return b"".join(parts)


def unpack_container(data: bytes, expected_format: str):
    if len(data) < _LEN.size:
        raise InvalidInputError("file too short for a header")
    (n,) = _LEN.unpack_from(data, 0)
    try:
        header = json.loads(data[_LEN.size:_LEN.size + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"corrupt header: {exc}") from None
    if header.get("format") != expected_format:
        raise InvalidInputError(f"expected a {expected_format} file, got {header.get('format')!r}")
    if header.get("version") != FORMAT_VERSION or header.get("dtype") != "<f8":
        raise InvalidInputError("unsupported format version or dtype")
    offset = _LEN.size + n
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(data):
            raise InvalidInputError(f"truncated block for {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(float)
        offset = end
    if offset != len(data):
        raise InvalidInputError("trailing bytes after the declared arrays")
    return header, arrays


# -- system description ---------------------------------------------------------


def grf_to_dict(cfg: GrfConfig) -> dict:
    return {
        "mean": cfg.mean,
        "length_scale": cfg.length_scale,
        "scale": cfg.scale,
        "jitter": cfg.jitter,
        "periods": list(cfg.periods) if cfg.periods is not None else None,
    }


def grf_from_dict(d: dict | None) -> GrfConfig | None:
    if d is None:
        return None
    periods = d.get("periods")
    return GrfConfig(
        float(d.get("mean", 0.0)),
        float(d.get("length_scale", 0.1)),
        float(d.get("scale", 1.0)),
        float(d.get("jitter", 1e-8)),
        tuple(periods) if periods is not None else None,
    )


def grid_to_dict(grid) -> dict | None:
    if grid is None:
        return None
    if isinstance(grid, Grid2D):
        return {"nx": grid.nx, "ny": grid.ny, "lx": grid.lx, "ly": grid.ly, "cutoff_x": grid.cutoff_x, "cutoff_y": grid.cutoff_y}
    return {"nx": grid.nx, "lx": grid.lx, "cutoff": grid.cutoff}


def grid_from_dict(d: dict | None):
    if d is None:
        return None
    if "ny" in d:
        return Grid2D(int(d["nx"]), int(d["ny"]), float(d["lx"]), float(d["ly"]), d.get("cutoff_x"), d.get("cutoff_y"))
    return Grid1D(int(d["nx"]), float(d["lx"]), d.get("cutoff"))


def system_to_dict(spec: SystemSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "time_horizon": spec.time_horizon,
        "grid": grid_to_dict(spec.grid),
        "coefficients": {k: float(v) for k, v in sorted(spec.coefficients.items())},
        "control": grf_to_dict(spec.control),
        "field_grf": grf_to_dict(spec.field_grf) if spec.field_grf is not None else None,
        "init_scale": spec.init_scale,
    }


def system_from_dict(d: dict) -> SystemSpec:
    return SystemSpec(
        SystemKind(d["kind"]),
        float(d["time_horizon"]),
        grid_from_dict(d.get("grid")),
        dict(d.get("coefficients", {})),
        grf_from_dict(d["control"]),
        grf_from_dict(d.get("field_grf")),
        float(d.get("init_scale", 1.0)),
    )


# -- datasets -----------------------------------------------------------------


def dataset_bytes(dataset: TimeSeriesDataset, meta: dict | None = None) -> bytes:
    header = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "config_hash": dataset.config_hash,
        "system": system_to_dict(dataset.system),
        "n_samples": len(dataset),
        "n_points": dataset.n_points,
        "state_shape": list(dataset.state_shape),
        "control_shape": list(dataset.controls.shape[2:]),
        "meta": meta or {},
    }
    arrays = [
        ("times", dataset.times),
        ("states", dataset.states),
        ("controls", dataset.controls),
        ("initial_states", dataset.initial_states),
    ]
    return pack_container(header, arrays)


def save_dataset(path, dataset: TimeSeriesDataset, meta: dict | None = None) -> None:
    atomic_write_bytes(path, dataset_bytes(dataset, meta))


def load_dataset_with_meta(path):
    header, arrays = unpack_container(Path(path).read_bytes(), DATASET_FORMAT)
    ds = TimeSeriesDataset(
        system_from_dict(header["system"]),
        arrays["times"],
        arrays["states"],
        arrays["controls"],
        arrays["initial_states"],
        header["config_hash"],
    )
    return ds, header.get("meta", {})


def load_dataset(path) -> TimeSeriesDataset:
    return load_dataset_with_meta(path)[0]


# -- checkpoints ----------------------------------------------------------------


def checkpoint_bytes(model: MlpModel, extra: dict) -> bytes:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": FORMAT_VERSION,
        "layer_sizes": list(model.layer_sizes),
        "activation": model.activation,
        "seed": int(model.seed),
        **extra,
    }
    arrays = []
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays.append((f"W{i}", w))
        arrays.append((f"b{i}", b))
    arrays.append(("input_mean", model.input_mean))
    arrays.append(("input_std", model.input_std))
    return pack_container(header, arrays)


def save_checkpoint(path, model: MlpModel, extra: dict) -> None:
    """``extra`` carries the feature spec, system and any run metadata."""
    atomic_write_bytes(path, checkpoint_bytes(model, extra))


def load_checkpoint(path):
    """Return ``(model, header)``."""
    header, arrays = unpack_container(Path(path).read_bytes(), CHECKPOINT_FORMAT)
    n = len(header["layer_sizes"]) - 1
    model = MlpModel(
        header["layer_sizes"],
        [arrays[f"W{i}"] for i in range(n)],
        [arrays[f"b{i}"] for i in range(n)],
        header["activation"],
        header["seed"],
        arrays["input_mean"],
        arrays["input_std"],
    )
    return model, header


# -- tables -------------------------------------------------------------------


def format_float(x) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def csv_text(columns: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_float(row[c]) if isinstance(row[c], (float, np.floating)) else row[c] for c in columns])
    return buf.getvalue()


def write_csv(path, columns: list[str], rows: list[dict]) -> None:
    atomic_write_text(path, csv_text(columns, rows))


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
