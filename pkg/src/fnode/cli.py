"""Command-line experiment runner.

Subcommands: ``generate``, ``train``, ``evaluate``, ``compare`` and
``superres``.  Exit status is 0 on success, 2 for configuration or input
problems and 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import mid_train, node_euler_train
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DivergenceError, FnodeError, InvalidInputError, NumericalError, ShapeError
from .integrate import IntegratorConfig, rollout
from .io import (
    load_checkpoint,
    load_dataset_with_meta,
    read_csv,
    read_json,
    save_checkpoint,
    save_dataset,
    sha256_file,
    system_to_dict,
    write_csv,
    write_json,
)
from .spectral import Grid1D, spectral_upsample
from .systems import SystemKind, TimeSeriesDataset, generate_dataset
from .training import FeatureBuilder, FeatureSpec, OracleModel, train_with_augmentation

logger = logging.getLogger("fnode")

SPLITS = ("train", "val", "test")
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
HISTORY_COLUMNS = ["epoch", "train_loss", "val_loss", "wall_time_s"]
METRIC_COLUMNS = ["sample", "mse", "mae"]
SUMMARY_COLUMNS = ["statistic", "mse", "mae"]


# -- shared helpers -------------------------------------------------------------


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    if cfg is not None:
        return cfg.output_dir
    raise ConfigError("--out is required")


def _data_dir(args, cfg: ExperimentConfig | None) -> Path:
    if getattr(args, "data", None):
        return Path(args.data)
    return _out_dir(args, cfg) / "data"


def _load_split(data_dir: Path, split: str, manifest: dict | None = None) -> tuple[TimeSeriesDataset, dict]:
    path = data_dir / f"{split}.fnd"
    if not path.exists():
        raise ConfigError(f"dataset file {path} not found")
    if manifest is not None:
        expected = manifest["files"].get(split, {}).get("sha256")
        if expected != sha256_file(path):
            raise ConfigError(f"{path} does not match its manifest entry")
    return load_dataset_with_meta(path)


def _read_manifest(data_dir: Path) -> dict:
    path = data_dir / "manifest.json"
    if not path.exists():
        raise ConfigError(f"manifest {path} not found; run generate first")
    return read_json(path)


def rollout_errors(model, builder: FeatureBuilder, dataset: TimeSeriesDataset, integrator: IntegratorConfig) -> list[dict]:
    """Roll out every trajectory from its initial state and score against the data.

    A divergent rollout is reported as an infinite error for that sample.
    """
    if not len(dataset):
        raise InvalidInputError("cannot evaluate an empty split")
    times = dataset.times[0]
    if not np.allclose(dataset.times, times):
        raise InvalidInputError("evaluation expects a shared time grid")
    try:
        preds = [rollout(model, builder, dataset.initial_states, dataset.controls, times, integrator)]
        index_groups = [np.arange(len(dataset))]
    except DivergenceError:
        preds, index_groups = [], []
        for i in range(len(dataset)):
            try:
                preds.append(rollout(model, builder, dataset.initial_states[i:i + 1], dataset.controls[i:i + 1], times, integrator))
            except DivergenceError:
                preds.append(None)
            index_groups.append(np.array([i]))
    rows = []
    for pred, idx in zip(preds, index_groups):
        for j, i in enumerate(idx):
            if pred is None or not np.all(np.isfinite(pred[j])):
                mse = mae = math.inf
            else:
                err = pred[j] - dataset.states[i]
                mse = float(np.mean(err**2))
                mae = float(np.mean(np.abs(err)))
            rows.append({"sample": int(i), "mse": mse, "mae": mae})
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    out = []
    mse = np.array([r["mse"] for r in rows], dtype=float)
    mae = np.array([r["mae"] for r in rows], dtype=float)
    for name, fn in (
        ("mean", np.mean),
        ("median", np.median),
        ("q1", lambda a: np.percentile(a, 25)),
        ("q3", lambda a: np.percentile(a, 75)),
        ("min", np.min),
        ("max", np.max),
    ):
        with np.errstate(invalid="ignore"):
            out.append({"statistic": name, "mse": float(fn(mse)), "mae": float(fn(mae))})
    return out


def _write_metrics(out: Path, stem: str, rows: list[dict]) -> list[dict]:
    summary = summarize(rows)
    write_csv(out / f"{stem}.csv", METRIC_COLUMNS, rows)
    write_csv(out / f"{stem}_summary.csv", SUMMARY_COLUMNS, summary)
    return summary


def _integrator_from(header_integrator: dict, dt: float) -> IntegratorConfig:
    method = header_integrator.get("method", "rk4")
    if method == "dopri5":
        return IntegratorConfig("dopri5", rtol=header_integrator.get("rtol", 1e-6), atol=header_integrator.get("atol", 1e-8))
    return IntegratorConfig(method, fixed_step=dt / header_integrator.get("substeps", 10))


# -- subcommands ----------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = load_config(args.config, args.seed)
    data_dir = _out_dir(args, cfg) / "data"
    counts = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}
    files = {}
    for split in SPLITS:
        # the test split is kept clean so errors are measured against the true dynamics
        noise = cfg.noise_sd if split != "test" else 0.0
        ds = generate_dataset(cfg.system, counts[split], cfg.n_points, cfg.seed, noise, split, config_hash=cfg.config_hash)
        path = data_dir / f"{split}.fnd"
        save_dataset(path, ds, {"split": split, "seed": cfg.seed, "noise_sd": noise})
        files[split] = {"path": path.name, "sha256": sha256_file(path), "n_samples": counts[split]}
        logger.info("wrote %s (%d samples)", path, counts[split])
    manifest = {"config_hash": cfg.config_hash, "files": files, "system": system_to_dict(cfg.system), "n_points": cfg.n_points}
    write_json(data_dir / "manifest.json", manifest)
    print(f"generated {sum(counts.values())} trajectories in {data_dir} (config hash {cfg.config_hash[:12]})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config, args.seed)
    out = _out_dir(args, cfg)
    data_dir = _data_dir(args, cfg)
    manifest = _read_manifest(data_dir)
    if manifest.get("config_hash") != cfg.config_hash:
        raise ConfigError("dataset manifest was generated from a different config; refusing to train")
    train_ds, _ = _load_split(data_dir, "train", manifest)
    val_ds, _ = _load_split(data_dir, "val", manifest)
    t0 = time.perf_counter()
    rounds = []
    if cfg.method == "fnode":
        result = train_with_augmentation(train_ds, cfg.train, cfg.features, val_ds)
        model, history, rounds = result.model, result.history, result.rounds
    elif cfg.method == "mid":
        model, history = mid_train(None, train_ds, cfg.features, cfg.train, val_ds)
    else:
        model, history, skipped = node_euler_train(train_ds, None, cfg.train, cfg.features, val_ds, cfg.segment_length)
        if skipped:
            logger.warning("%d divergent segments skipped", skipped)
    seconds = time.perf_counter() - t0
    extra = {
        "method": cfg.method,
        "feature_spec": cfg.features.to_dict(),
        "system": system_to_dict(cfg.system),
        "integrator": cfg.integrator,
        "config_hash": cfg.config_hash,
        "train": cfg.raw["train"],
    }
    save_checkpoint(out / "model.ckpt", model, extra)
    write_csv(out / "history.csv", HISTORY_COLUMNS, history)
    # timings live here, apart from the byte-reproducible artifacts
    write_json(
        out / "run.json",
        {"name": cfg.name, "method": cfg.method, "condition": cfg.condition, "train_seconds": seconds, "rounds": rounds},
    )
    final = history[-1]["val_loss"] if history else math.nan
    print(f"{cfg.method}: {len(history)} epochs in {seconds:.1f}s, final val loss {final:.4g}")
    if not math.isfinite(final):
        return EXIT_NUMERICAL
    return EXIT_OK


def _model_and_builder(args, dataset: TimeSeriesDataset):
    if args.oracle:
        spec = FeatureSpec.for_system(dataset.system)
        return OracleModel(dataset.system, spec), FeatureBuilder(dataset.system, spec), {}
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required unless --oracle is given")
    model, header = load_checkpoint(args.checkpoint)
    if header["system"]["kind"] != dataset.system.kind.value:
        raise ShapeError(f"checkpoint is for {header['system']['kind']}, data is {dataset.system.kind.value}")
    builder = FeatureBuilder(dataset.system, FeatureSpec.from_dict(header["feature_spec"]))
    if builder.n_inputs != model.n_inputs or builder.n_outputs != model.n_outputs:
        raise ShapeError("checkpoint feature spec does not match the dataset dimensions")
    return model, builder, header


def cmd_evaluate(args) -> int:
    data_dir = Path(args.data)
    dataset, _ = _load_split(data_dir, args.split)
    model, builder, header = _model_and_builder(args, dataset)
    out = Path(args.out) if args.out else (Path(args.checkpoint).parent if args.checkpoint else data_dir)
    integrator = _integrator_from(header.get("integrator", {}), dataset.dt)
    rows = rollout_errors(model, builder, dataset, integrator)
    summary = _write_metrics(out, f"metrics_{args.split}", rows)
    print(f"{args.split}: median MSE {summary[1]['mse']:.4g}, mean MSE {summary[0]['mse']:.4g} over {len(rows)} samples")
    return EXIT_OK


def cmd_superres(args) -> int:
    data_dir = Path(args.data)
    dataset, meta = _load_split(data_dir, args.split)
    if not dataset.system.kind.is_pde:
        raise InvalidInputError("super-resolution needs a PDE checkpoint")
    if dataset.system.kind == SystemKind.NS:
        raise InvalidInputError("super-resolution is supported for 1-D PDEs only")
    grid = dataset.system.grid
    if args.target_nx < grid.nx:
        raise InvalidInputError(f"target nx {args.target_nx} is below the training nx {grid.nx}")
    model, builder, header = _model_and_builder(args, dataset)
    fine_system = dataset.system.with_grid(Grid1D(args.target_nx, grid.lx))
    truth = generate_dataset(
        fine_system,
        len(dataset),
        dataset.n_points,
        int(meta["seed"]),
        0.0,
        args.split,
        initial_states=spectral_upsample(dataset.initial_states, args.target_nx),
    )
    fine_builder = FeatureBuilder(fine_system, builder.spec)
    integrator = _integrator_from(header.get("integrator", {}), dataset.dt)
    rows = rollout_errors(model, fine_builder, truth, integrator)
    out = Path(args.out) if args.out else (Path(args.checkpoint).parent if args.checkpoint else data_dir)
    summary = _write_metrics(out, f"superres_{args.split}_nx{args.target_nx}", rows)
    print(f"nx={args.target_nx}: median MSE {summary[1]['mse']:.4g}, mean MSE {summary[0]['mse']:.4g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.runs) < 2:
        raise ConfigError("compare needs at least two run directories")
    long_rows = []
    for run in args.runs:
        run = Path(run)
        info_path, summary_path = run / "run.json", run / "metrics_test_summary.csv"
        for p in (info_path, summary_path):
            if not p.exists():
                raise ConfigError(f"missing run artifact {p}")
        info = read_json(info_path)
        stats = {r["statistic"]: float(r["mse"]) for r in read_csv(summary_path)}
        long_rows.append(
            {
                "method": info["method"],
                "condition": info["condition"],
                "mse_mean": stats["mean"],
                "mse_median": stats["median"],
                "train_seconds": float(info["train_seconds"]),
            }
        )
    long_rows.sort(key=lambda r: (r["method"], r["condition"]))
    out = Path(args.out)
    write_csv(out / "compare_long.csv", ["method", "condition", "mse_mean", "mse_median", "train_seconds"], long_rows)
    conditions = sorted({r["condition"] for r in long_rows})
    wide = []
    for method in sorted({r["method"] for r in long_rows}):
        mine = {r["condition"]: r for r in long_rows if r["method"] == method}
        row = {"method": method}
        for c in conditions:
            row[f"mse[{c}]"] = mine[c]["mse_mean"] if c in mine else math.nan
        row["train_seconds"] = float(np.mean([r["train_seconds"] for r in mine.values()]))
        wide.append(row)
    write_csv(out / "compare.csv", ["method"] + [f"mse[{c}]" for c in conditions] + ["train_seconds"], wide)
    print(f"compared {len(long_rows)} runs over {len(conditions)} conditions -> {out / 'compare.csv'}")
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fnode", description="Simulation-free neural ODE experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="simulate train/val/test datasets")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on generated data")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--data", help="dataset directory (default: <out>/data)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="roll out a model on a split and score it")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--oracle", action="store_true", help="use the true vector field instead of a checkpoint")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="tabulate test errors and training times of several runs")
    p.add_argument("runs", nargs="+", help="run directories containing run.json and metrics")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("superres", help="evaluate a 1-D PDE model on a finer spatial grid")
    p.add_argument("--checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--target-nx", type=int, required=True)
    p.add_argument("--split", choices=SPLITS, default="test")
    p.add_argument("--oracle", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_superres)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FnodeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
