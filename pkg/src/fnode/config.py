"""Experiment configuration: JSON schema, validation and conversion to runtime objects."""
from __future__ import annotations

import copy
from dataclasses import dataclass, fields, replace
from pathlib import Path

import jsonschema

from .errors import ConfigError, FnodeError
from .integrate import IntegratorConfig
from .io import canonical_json, grf_from_dict, grid_from_dict, read_json, sha256_bytes
from .systems import SystemKind, SystemSpec, default_system
from .training import FeatureSpec, TrainConfig

SCHEMA_VERSION = 1
METHODS = ("fnode", "mid", "node_euler")

_GRF = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "mean": {"type": "number"},
        "length_scale": {"type": "number", "exclusiveMinimum": 0},
        "scale": {"type": "number", "minimum": 0},
        "jitter": {"type": "number", "exclusiveMinimum": 0},
        "periods": {"type": ["array", "null"], "items": {"type": "number", "exclusiveMinimum": 0}},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "system", "data", "train"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string"},
        "method": {"enum": list(METHODS)},
        "condition": {"type": "string"},
        "output_dir": {"type": "string"},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": [k.value for k in SystemKind]},
                "time_horizon": {"type": "number", "exclusiveMinimum": 0},
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["nx"],
                    "properties": {
                        "nx": {"type": "integer", "minimum": 4},
                        "ny": {"type": "integer", "minimum": 4},
                        "lx": {"type": "number", "exclusiveMinimum": 0},
                        "ly": {"type": "number", "exclusiveMinimum": 0},
                        "cutoff": {"type": "integer", "minimum": 0},
                        "cutoff_x": {"type": "integer", "minimum": 0},
                        "cutoff_y": {"type": "integer", "minimum": 0},
                    },
                },
                "coefficients": {"type": "object", "additionalProperties": {"type": "number"}},
                "init_scale": {"type": "number", "exclusiveMinimum": 0},
                "field_grf": _GRF,
            },
        },
        "grf": _GRF,
        "data": {
            "type": "object",
            "additionalProperties": False,
            "required": ["n_train", "n_val", "n_test", "n_points", "seed"],
            "properties": {
                "n_train": {"type": "integer", "minimum": 1},
                "n_val": {"type": "integer", "minimum": 1},
                "n_test": {"type": "integer", "minimum": 1},
                "n_points": {"type": "integer", "minimum": 8},
                "noise_sd": {"type": "number", "minimum": 0},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "required": ["cutoff", "epochs"],
            "properties": {
                "cutoff": {"type": "integer", "minimum": 1},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "weight_decay": {"type": "number", "minimum": 0},
                "loss_form": {"enum": ["mean_squared", "mean_norm"]},
                "augmentation_rounds": {"type": "integer", "minimum": 0},
                "validation_threshold": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "seed": {"type": "integer", "minimum": 0},
                "hidden_width": {"type": "integer", "minimum": 1},
                "hidden_layers": {"type": "integer", "minimum": 1},
                "activation": {"enum": ["tanh", "gelu"]},
                "seam_fraction": {"type": "number", "minimum": 0, "maximum": 0.45},
                "boundary": {"enum": ["detrend", "periodic"]},
                "pilot_epochs": {"type": "integer", "minimum": 1},
                "segment_length": {"type": "integer", "minimum": 1},
            },
        },
        "features": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "includes_control": {"type": "boolean"},
                "spatial_orders": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                },
                "ns_prior_features": {"type": "boolean"},
            },
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["euler", "rk4", "dopri5"]},
                "substeps": {"type": "integer", "minimum": 1},
                "rtol": {"type": "number", "exclusiveMinimum": 0},
                "atol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}


@dataclass
class ExperimentConfig:
    raw: dict
    name: str
    method: str
    condition: str
    system: SystemSpec
    n_train: int
    n_val: int
    n_test: int
    n_points: int
    noise_sd: float
    seed: int
    train: TrainConfig
    features: FeatureSpec
    integrator: dict
    segment_length: int
    output_dir: Path

    @property
    def config_hash(self) -> str:
        """Hash of everything that determines the generated data."""
        relevant = {"system": self.raw["system"], "grf": self.raw.get("grf"), "data": self.raw["data"]}
        return sha256_bytes(canonical_json(relevant).encode("utf-8"))

    def integrator_for(self, dt: float) -> IntegratorConfig:
        d = self.integrator
        method = d.get("method", "rk4")
        if method == "dopri5":
            return IntegratorConfig("dopri5", rtol=d.get("rtol", 1e-6), atol=d.get("atol", 1e-8))
        return IntegratorConfig(method, fixed_step=dt / d.get("substeps", 10))


def _path_of(error) -> str:
    return "/".join(str(p) for p in error.absolute_path) or "<root>"


def parse_config(raw: dict, seed: int | None = None, base_dir: Path | None = None) -> ExperimentConfig:
    """Validate ``raw`` against the schema and build runtime objects.

    Raises :class:`ConfigError` naming the offending field.
    """
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["data"]["seed"] = int(seed)
        raw["train"]["seed"] = int(seed)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(f"config field {_path_of(e)}: {e.message}")
    try:
        sysd = raw["system"]
        spec = default_system(sysd["kind"])
        over = {}
        if "time_horizon" in sysd:
            over["time_horizon"] = float(sysd["time_horizon"])
        if "grid" in sysd:
            g = dict(sysd["grid"])
            base = spec.grid
            if base is None:
                raise ConfigError("config field system/grid: ODE systems have no grid")
            g.setdefault("lx", base.lx)
            if "ny" in g or hasattr(base, "ny"):
                g.setdefault("ny", g["nx"])
                g.setdefault("ly", base.ly)
            over["grid"] = grid_from_dict(g)
        if "coefficients" in sysd:
            over["coefficients"] = {**spec.coefficients, **sysd["coefficients"]}
        if "init_scale" in sysd:
            over["init_scale"] = float(sysd["init_scale"])
        if "field_grf" in sysd:
            over["field_grf"] = grf_from_dict({**_grf_defaults(spec.field_grf), **sysd["field_grf"]})
        if "grf" in raw:
            over["control"] = grf_from_dict({**_grf_defaults(spec.control), **raw["grf"]})
        spec = replace(spec, **over) if over else spec
        tdict = dict(raw["train"])
        segment_length = int(tdict.pop("segment_length", 10))
        train_cfg = TrainConfig(**tdict)
        features = FeatureSpec.from_dict({**FeatureSpec.for_system(spec).to_dict(), **raw.get("features", {})})
        features.validate_for(spec)
    except ConfigError:
        raise
    except (FnodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    data = raw["data"]
    n_points = int(data["n_points"])
    if train_cfg.cutoff > n_points // 2:
        raise ConfigError(f"config field train/cutoff: {train_cfg.cutoff} exceeds n_points/2 = {n_points // 2}")
    if segment_length >= n_points:
        raise ConfigError("config field train/segment_length: must be below n_points")
    out = Path(raw.get("output_dir", "runs/" + raw.get("name", spec.kind.value)))
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    return ExperimentConfig(
        raw=raw,
        name=raw.get("name", spec.kind.value),
        method=raw.get("method", "fnode"),
        condition=raw.get("condition", f"noise={float(data.get('noise_sd', 0.0)):g}"),
        system=spec,
        n_train=int(data["n_train"]),
        n_val=int(data["n_val"]),
        n_test=int(data["n_test"]),
        n_points=n_points,
        noise_sd=float(data.get("noise_sd", 0.0)),
        seed=int(data["seed"]),
        train=train_cfg,
        features=features,
        integrator=dict(raw.get("integrator", {})),
        segment_length=segment_length,
        output_dir=out,
    )


def _grf_defaults(cfg) -> dict:
    if cfg is None:
        return {}
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def load_config(path, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config(read_json(path), seed)
