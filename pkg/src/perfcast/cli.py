"""Command-line entry point.

Subcommands: genbench, train, predict, sweep, validate-timeline. All
configuration is declarative YAML; every run writes a manifest next to its
outputs recording inputs, digests, and the seed so reruns are reproducible
byte for byte.

Exit codes: 0 success, 2 config error, 3 data error, 4 incomplete bank.
"""

from __future__ import annotations

import csv
import functools
import hashlib
import json
import sys
from pathlib import Path

import click
import yaml

from . import __version__, benchkit, regress
from .configs import ClusterSpec, ModelConfig, ParallelLayout
from .errors import (ConfigError, DuplicateError, InsufficientData,
                     MissingRegressor, PerfcastError, RowError, SchemaError)
from .predictor import RegressorBank, predict_batch_time, sweep as run_sweep
from .timeline import StageTimes, compare_formula_vs_sim
from .workload import COMM_OPS, COMPUTE_OPS, OperatorKind, op_from_name

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_BANK = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (SchemaError, RowError, DuplicateError, InsufficientData) as exc:
            _fail(EXIT_DATA, str(exc))
        except MissingRegressor as exc:
            _fail(EXIT_BANK, f"missing regressor {exc}")
        except (ConfigError, PerfcastError, yaml.YAMLError, OSError) as exc:
            _fail(EXIT_CONFIG, str(exc))
    return wrapper


def _load_yaml(path):
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def _section(data, name, path, cls):
    if name not in data:
        raise ConfigError(f"{path}: missing section '{name}'")
    try:
        return cls(**data[name])
    except TypeError as exc:
        raise ConfigError(f"{path}: section '{name}': {exc}") from exc


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir, subcommand, config_paths, seed, outputs):
    manifest = {
        "subcommand": subcommand,
        "tool_version": __version__,
        "seed": seed,
        "configs": {str(p): _digest(p) for p in config_paths},
        "outputs": sorted(str(o) for o in outputs),
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _axes(raw: dict) -> dict[str, benchkit.AxisSpec]:
    out = {}
    for name, spec in raw.items():
        for key in ("start", "step", "end"):
            if key not in spec:
                raise ConfigError(f"axis '{name}': missing field '{key}'")
        out[name] = benchkit.AxisSpec.parse(spec["start"], spec["step"], spec["end"])
    return out


@click.group()
@click.version_option(__version__)
def main():
    """Predict end-to-end training-batch time for transformer LLMs under
    3D parallelism from operator-level benchmark data."""


@main.command()
@click.option("--grid-config", type=click.Path(exists=True),
              help="YAML overriding the default sampling grids.")
@click.option("--hw-config", type=click.Path(exists=True),
              help="YAML with synthetic hardware model fields.")
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_dir", default="bench_out", show_default=True)
@click.option("--quiet", is_flag=True)
@handle_errors
def genbench(grid_config, hw_config, seed, out_dir, quiet):
    """Generate a synthetic benchmark dataset CSV from the sampling grids."""
    cfg = _load_yaml(grid_config) if grid_config else {}
    hw_fields = _load_yaml(hw_config) if hw_config else {}
    try:
        hw = benchkit.SynthHardwareModel(**hw_fields)
    except TypeError as exc:
        raise ConfigError(f"{hw_config}: {exc}") from exc

    comp_cfg = cfg.get("compute", {})
    axes = _axes(comp_cfg["axes"]) if "axes" in comp_cfg else None
    op_names = comp_cfg.get("ops")
    if op_names:
        ops = [op_from_name(n) for n in op_names]
    else:
        ops = sorted((COMPUTE_OPS - {OperatorKind.OPTIMIZER}),
                     key=lambda o: o.value)
    points = benchkit.gen_compute_grid(axes)
    vectors = benchkit.compute_vectors(
        ops, points, v0=comp_cfg.get("v0", 50257),
        directions=tuple(comp_cfg.get("directions", ("fwd", "bwd"))))

    comm_cfg = cfg.get("comm", {})
    gpn = cfg.get("gpus_per_node", 4)
    stride = comm_cfg.get("stride", 1)
    for op in sorted(COMM_OPS, key=lambda o: o.value):
        raw = comm_cfg.get(op.value)
        spec = (_axes(raw) if raw else benchkit.DEFAULT_COMM_GRIDS[op])
        pairs = benchkit.gen_comm_grid(spec, stride=stride)
        vectors.extend(benchkit.comm_vectors(op, pairs, gpus_per_node=gpn))

    opt_cfg = cfg.get("optimizer", {})
    vectors.extend(benchkit.optimizer_vectors(
        opt_cfg.get("mp", [1, 2, 4, 8]),
        opt_cfg.get("d", [2048, 4096, 6144, 8192]),
        opt_cfg.get("encoders", list(range(1, 13)))))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "bench.csv"
    records = benchkit.synth_dataset(
        vectors, hw, seed=seed, replicates=cfg.get("replicates", 1),
        hardware_id=cfg.get("hardware_id", "synthetic"), out_path=out_csv)
    _write_manifest(out_dir, "genbench",
                    [p for p in (grid_config, hw_config) if p], seed, [out_csv])
    if not quiet:
        click.echo(f"wrote {len(records)} records to {out_csv}")


def _candidate_grid_from(path):
    if path is None:
        return None
    raw = _load_yaml(path)
    if "candidates" not in raw or not isinstance(raw["candidates"], list):
        raise ConfigError(f"{path}: expected a 'candidates' list")
    return raw["candidates"]


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True),
              help="Benchmark CSV to train from.")
@click.option("--candidates", "candidates_path", type=click.Path(exists=True),
              help="YAML with a 'candidates' hyperparameter list.")
@click.option("--seed", default=42, show_default=True)
@click.option("--out", "out_dir", default="bank", show_default=True)
@click.option("--quiet", is_flag=True)
@handle_errors
def train(data, candidates_path, seed, out_dir, quiet):
    """Fit and select one regressor per (operator, direction) pair."""
    records = benchkit.ingest_csv(data)
    records = benchkit.aggregate_records(records)
    grid = _candidate_grid_from(candidates_path)

    groups: dict = {}
    for rec in records:
        groups.setdefault((rec.op, rec.direction), []).append(
            (rec.feats, rec.latency_us))

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs, rows = [], []
    for (op, direction) in sorted(groups, key=lambda k: (k[0].value, k[1])):
        samples = groups[(op, direction)]
        if len(samples) < 10:
            raise InsufficientData(
                f"{op.value}/{direction}: only {len(samples)} samples (need 10)")
        model, report = regress.select_model(
            samples, candidate_grid=grid, seed=seed, op=op, direction=direction)
        path = out_dir / f"{op.value}_{direction}.model"
        regress.save_model(model, path)
        outputs.append(path)
        sel = report.candidates[report.selected]
        rows.append((f"{op.value}/{direction}", sel["kind"],
                     report.val_mape[report.selected], len(samples)))
    _write_manifest(out_dir, "train", [data] + ([candidates_path] if candidates_path
                                                else []), seed, outputs)
    if not quiet:
        click.echo(f"{'operator':<32} {'kind':<8} {'val_mape':>10} {'n':>6}")
        for name, kind, err, n in rows:
            click.echo(f"{name:<32} {kind:<8} {err:>10.4g} {n:>6}")


def _load_run_config(config):
    data = _load_yaml(config)
    model = _section(data, "model", config, ModelConfig)
    layout = _section(data, "layout", config, ParallelLayout)
    cluster = _section(data, "cluster", config, ClusterSpec)
    return model, layout, cluster


def _breakdown_lines(b):
    lines = [f"{'component':<28} {'seconds':>14} {'share':>9}"]
    for name in b.COMPONENTS:
        lines.append(f"{name:<28} {getattr(b, name):>14.6g} "
                     f"{b.proportion(name):>9.4f}")
    return lines


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True),
              help="YAML with model/layout/cluster sections.")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="predict_out", show_default=True)
@click.option("--validate", is_flag=True,
              help="Also run the 1F1B simulator on the same stage times.")
@click.option("--seed", default=42, show_default=True)
@click.option("--quiet", is_flag=True)
@handle_errors
def predict(config, bank_dir, out_dir, validate, seed, quiet):
    """Predict the training-batch time breakdown for one configuration."""
    model, layout, cluster = _load_run_config(config)
    bank = RegressorBank.load(bank_dir)
    b = predict_batch_time(model, layout, cluster, bank)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "breakdown.csv"
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "seconds", "proportion"])
        for name in b.COMPONENTS:
            w.writerow([name, repr(getattr(b, name)), repr(b.proportion(name))])
        for phase, share in b.phase_proportions().items():
            w.writerow([f"phase:{phase}", "", repr(share)])
    _write_manifest(out_dir, "predict", [config], seed, [out_csv])

    if not quiet:
        for line in _breakdown_lines(b):
            click.echo(line)
        for warning in b.warnings:
            click.echo(f"warning: {warning}")
    if validate:
        from .predictor import validate_against_sim
        gap = validate_against_sim(model, layout, cluster, bank)
        click.echo(f"formula {gap['formula']:.6g} s, simulator {gap['sim']:.6g} s, "
                   f"gap {gap['gap']:+.4%}")


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True),
              help="YAML with models/layouts/cluster lists.")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default="sweep_out", show_default=True)
@click.option("--seed", default=42, show_default=True)
@click.option("--quiet", is_flag=True)
@handle_errors
def sweep(config, bank_dir, out_dir, seed, quiet):
    """Rank a cross-product of models and layouts by predicted batch time."""
    data = _load_yaml(config)
    if not data.get("models") or not data.get("layouts"):
        raise ConfigError(f"{config}: 'models' and 'layouts' must be non-empty")
    models = []
    for i, entry in enumerate(data["models"]):
        name = entry.get("name", f"model{i}")
        try:
            models.append((name, ModelConfig(**entry["model"])))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"{config}: model '{name}': {exc}") from exc
    layouts = [ParallelLayout(*triple) for triple in data["layouts"]]
    cluster = _section(data, "cluster", config, ClusterSpec)
    bank = RegressorBank.load(bank_dir)

    report = run_sweep(models, layouts, [cluster], bank)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_csv = out_dir / "sweep.csv"
    with open(out_csv, "w", newline="") as fh:
        csv.writer(fh).writerows(report.to_csv_rows())
    _write_manifest(out_dir, "sweep", [config], seed, [out_csv])
    if not quiet:
        click.echo(report.to_text())


@main.command("validate-timeline")
@click.option("--micro-batches", "-m", default=16, show_default=True)
@click.option("--stages", "-s", default=4, show_default=True)
@click.option("--fwd", default="0.1", help="Comma-separated per-stage seconds.")
@click.option("--bwd", default="0.2", help="Comma-separated per-stage seconds.")
@click.option("--sync", default=0.0, type=float)
@click.option("--update", default=0.0, type=float)
@handle_errors
def validate_timeline(micro_batches, stages, fwd, bwd, sync, update):
    """Compare the closed-form runtime against the 1F1B event simulator."""
    def parse(text):
        vals = [float(v) for v in text.split(",")]
        return tuple(vals * stages if len(vals) == 1 else vals)

    st = StageTimes(parse(fwd), parse(bwd), update=(update,) * stages,
                    first_stage_dp_allreduce=sync)
    result = compare_formula_vs_sim(st, micro_batches, stages)
    click.echo(f"formula   {result['formula']:.6g} s")
    click.echo(f"simulator {result['sim']:.6g} s")
    click.echo(f"gap       {result['gap']:+.4%}")


if __name__ == "__main__":
    main()
