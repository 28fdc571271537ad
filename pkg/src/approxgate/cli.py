"""Command-line front end: dataset generation, pipeline training,
evaluation, error-bound sweeps and method comparison.

Commands write a manifest.json with the fully resolved configuration next
to their outputs, so any artifact can be regenerated from its manifest.

Exit codes: 0 success, 2 usage errors (argparse), 3 validation errors
(bad values), 4 runtime errors (missing files, refused overwrites,
diverged training).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .benchmarks import (
    Dataset,
    customize,
    generate_dataset,
    get_benchmark,
    load_dataset,
    save_dataset,
)
from .mlp import Topology, TrainConfig
from .pipelines import (
    PIPELINE_NAMES,
    PipelineConfig,
    load_system,
    save_system,
    train_pipeline,
)
from .quality import write_verdicts_csv
from .runtime import CostModelParams, evaluate, write_report, write_routes_csv

# (section, key) pairs a config file may set; flags override file values.
_CONFIG_SCHEMA = {
    ("run", "benchmark"): str,
    ("run", "pipeline"): str,
    ("run", "n"): int,
    ("run", "seed"): int,
    ("run", "bound"): float,
    ("run", "train_fraction"): float,
    ("run", "approx_topology"): str,
    ("run", "classifier_topology"): str,
    ("pipeline", "iterations"): int,
    ("pipeline", "approximators"): int,
    ("pipeline", "policy"): str,
    ("pipeline", "territory_safe_only"): bool,
    ("train", "epochs"): int,
    ("train", "learning_rate"): float,
    ("train", "batch_size"): int,
    ("cost", "t_cpu"): float,
    ("cost", "t_apx"): float,
    ("cost", "t_cls"): float,
    ("cost", "t_reload"): float,
    ("cost", "e_cpu"): float,
    ("cost", "e_apx"): float,
    ("cost", "e_cls"): float,
    ("cost", "e_reload"): float,
    ("cost", "buffer_case"): str,
}

_FLAG_TO_CONFIG = {
    "benchmark": ("run", "benchmark"),
    "pipeline": ("run", "pipeline"),
    "n": ("run", "n"),
    "seed": ("run", "seed"),
    "bound": ("run", "bound"),
    "train_fraction": ("run", "train_fraction"),
    "approx_topology": ("run", "approx_topology"),
    "classifier_topology": ("run", "classifier_topology"),
    "iterations": ("pipeline", "iterations"),
    "approximators": ("pipeline", "approximators"),
    "policy": ("pipeline", "policy"),
    "territory_safe_only": ("pipeline", "territory_safe_only"),
    "epochs": ("train", "epochs"),
    "learning_rate": ("train", "learning_rate"),
    "batch_size": ("train", "batch_size"),
    "t_cpu": ("cost", "t_cpu"),
    "t_apx": ("cost", "t_apx"),
    "t_cls": ("cost", "t_cls"),
    "t_reload": ("cost", "t_reload"),
    "e_cpu": ("cost", "e_cpu"),
    "e_apx": ("cost", "e_apx"),
    "e_cls": ("cost", "e_cls"),
    "e_reload": ("cost", "e_reload"),
    "buffer_case": ("cost", "buffer_case"),
}


def _read_config_file(path: str) -> dict[tuple[str, str], object]:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    values: dict[tuple[str, str], object] = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            spec = _CONFIG_SCHEMA.get((section, key))
            if spec is None:
                raise ValueError(f"unknown config entry [{section}] {key}")
            if spec is bool:
                values[(section, key)] = raw.strip().lower() in ("1", "true", "yes", "on")
            else:
                values[(section, key)] = spec(raw)
    return values


def _resolve(args: argparse.Namespace) -> dict[tuple[str, str], object]:
    """Precedence: built-in defaults < config file < explicit flags."""
    resolved: dict[tuple[str, str], object] = {}
    if getattr(args, "config", None):
        resolved.update(_read_config_file(args.config))
    for flag, key in _FLAG_TO_CONFIG.items():
        value = getattr(args, flag, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _get(resolved: dict, section: str, key: str, default=None):
    return resolved.get((section, key), default)


def _train_config(resolved: dict, seed: int) -> TrainConfig:
    kwargs = {}
    if _get(resolved, "train", "epochs") is not None:
        kwargs["epochs"] = _get(resolved, "train", "epochs")
    if _get(resolved, "train", "learning_rate") is not None:
        kwargs["learning_rate"] = _get(resolved, "train", "learning_rate")
    if _get(resolved, "train", "batch_size") is not None:
        kwargs["batch_size"] = _get(resolved, "train", "batch_size")
    return TrainConfig(seed=seed, **kwargs)


def _pipeline_config(resolved: dict, seed: int) -> PipelineConfig:
    tc = _train_config(resolved, seed)
    kwargs = {"approx_train": tc, "classifier_train": tc, "seed": seed}
    if _get(resolved, "pipeline", "iterations") is not None:
        kwargs["n_iterations"] = _get(resolved, "pipeline", "iterations")
    if _get(resolved, "pipeline", "approximators") is not None:
        kwargs["n_approximators"] = _get(resolved, "pipeline", "approximators")
    if _get(resolved, "pipeline", "policy") is not None:
        kwargs["selection_policy"] = _get(resolved, "pipeline", "policy")
    if _get(resolved, "pipeline", "territory_safe_only") is not None:
        kwargs["territory_safe_only"] = _get(resolved, "pipeline", "territory_safe_only")
    return PipelineConfig(**kwargs)


def _cost_params(resolved: dict) -> CostModelParams:
    kwargs = {}
    for key in ("t_cpu", "t_apx", "t_cls", "t_reload", "e_cpu", "e_apx", "e_cls", "e_reload", "buffer_case"):
        value = _get(resolved, "cost", key)
        if value is not None:
            kwargs[key] = value
    return CostModelParams(**kwargs)


def _resolved_benchmark(resolved: dict):
    name = _get(resolved, "run", "benchmark")
    if not name:
        raise ValueError("a benchmark name is required (--benchmark)")
    bench = get_benchmark(name)
    approx_topo = _get(resolved, "run", "approx_topology")
    clf_topo = _get(resolved, "run", "classifier_topology")
    return customize(
        bench,
        error_bound=_get(resolved, "run", "bound"),
        approx_topology=Topology.from_string(approx_topo) if approx_topo else None,
        classifier_topology=Topology.from_string(clf_topo, output_activation="softmax") if clf_topo else None,
    )


def _write_manifest(out_dir: Path, command: str, resolved: dict) -> None:
    config = {f"{section}.{key}": value for (section, key), value in sorted(resolved.items())}
    manifest = {"tool": "approxgate", "version": __version__, "command": command, "config": config}
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _prepare_out(path: str, expected: list[str], force: bool) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    if not force:
        clashes = [name for name in expected if (out / name).exists()]
        if clashes:
            raise FileExistsError(
                f"refusing to overwrite {', '.join(clashes)} in {out} (use --force)"
            )
    return out


def cmd_generate(args: argparse.Namespace) -> int:
    resolved = _resolve(args)
    benchmark = _resolved_benchmark(resolved)
    n = _get(resolved, "run", "n", 1000)
    seed = _get(resolved, "run", "seed", 0)
    fraction = _get(resolved, "run", "train_fraction", 2.0 / 3.0)
    dataset = generate_dataset(benchmark, n, seed, fraction)
    out = _prepare_out(args.out, ["dataset.csv", "dataset.meta.json"], args.force)
    save_dataset(dataset, out)
    _write_manifest(out, "generate", resolved)
    print(f"wrote {dataset.n_samples} samples ({len(dataset.train_indices)} train / "
          f"{len(dataset.test_indices)} test) to {out}")
    return 0


def _load_dataset_arg(path: str) -> Dataset:
    src = Path(path)
    if not (src / "dataset.csv").exists():
        raise FileNotFoundError(f"no dataset at {src} (expected {src / 'dataset.csv'})")
    return load_dataset(src)


def cmd_train(args: argparse.Namespace) -> int:
    resolved = _resolve(args)
    pipeline = _get(resolved, "run", "pipeline")
    if not pipeline:
        raise ValueError("a pipeline name is required (--pipeline)")
    if pipeline not in PIPELINE_NAMES:
        raise ValueError(f"unknown pipeline {pipeline!r} (known: {', '.join(PIPELINE_NAMES)})")
    dataset = _load_dataset_arg(args.dataset)
    resolved[("run", "benchmark")] = dataset.benchmark_name
    benchmark = _resolved_benchmark(resolved)
    seed = _get(resolved, "run", "seed", 0)
    config = _pipeline_config(resolved, seed)
    system = train_pipeline(pipeline, dataset, benchmark, config)
    out = _prepare_out(args.out, ["manifest.json", "training_log.csv"], args.force)
    save_system(system, out, config)
    # the system manifest doubles as the run manifest; add the run block
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["run"] = {
        "tool": "approxgate",
        "version": __version__,
        "command": "train",
        "pipeline": pipeline,
        "dataset": str(Path(args.dataset)),
        "config": {f"{s}.{k}": v for (s, k), v in sorted(resolved.items())},
    }
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"{pipeline} on {benchmark.name}: "
          f"{system.n_approximators} approximator(s), {len(system.classifiers)} classifier(s)")
    print(f"{'round':>5} {'pair':>4} {'invocation':>10} {'rmse_norm':>9} {'selected':>8}")
    for e in system.training_log:
        print(f"{e.round:>5} {e.pair:>4} {e.invocation:>10.4f} {e.rmse_normalized:>9.4f} {e.n_selected:>8}")
    for event in system.events:
        print(f"note: {event}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    resolved = _resolve(args)
    system = load_system(args.system)
    dataset = _load_dataset_arg(args.dataset)
    benchmark = get_benchmark(system.benchmark_name)
    params = _cost_params(resolved)
    artifacts = evaluate(system, benchmark, dataset, params)
    out = _prepare_out(args.out, ["report.txt", "verdicts.csv", "routes.csv"], args.force)
    write_report(out / "report.txt", artifacts.report, benchmark.name, system.architecture)
    write_verdicts_csv(out / "verdicts.csv", artifacts.inputs, artifacts.exact_outputs, artifacts.verdicts)
    write_routes_csv(out / "routes.csv", artifacts.routes, artifacts.confidences)
    _write_manifest(out, "eval", resolved)
    r = artifacts.report
    print(f"invocation {r.invocation:.4f}  rmse_normalized {r.rmse_normalized:.4f}  "
          f"speedup {r.modeled_speedup:.3f}  energy_reduction {r.modeled_energy_reduction:.3f}")
    print("confusion " + " ".join(f"{k}={v}" for k, v in r.confusion_counts.items()))
    return 0


def _run_pipeline_once(pipeline, dataset, benchmark, resolved, seed, params):
    config = _pipeline_config(resolved, seed)
    system = train_pipeline(pipeline, dataset, benchmark, config)
    artifacts = evaluate(system, benchmark, dataset, params)
    return system, artifacts


def cmd_sweep(args: argparse.Namespace) -> int:
    resolved = _resolve(args)
    bounds = [float(b) for b in args.bounds.split(",") if b.strip()]
    if len(bounds) < 2:
        raise ValueError("sweep needs at least 2 bounds (--bounds b1,b2,...)")
    if any(b <= 0 for b in bounds):
        raise ValueError("all bounds must be positive")
    pipelines = [p.strip() for p in args.pipelines.split(",") if p.strip()]
    for p in pipelines:
        if p not in PIPELINE_NAMES:
            raise ValueError(f"unknown pipeline {p!r} (known: {', '.join(PIPELINE_NAMES)})")
    benchmark = _resolved_benchmark(resolved)
    n = _get(resolved, "run", "n", 1000)
    seed = _get(resolved, "run", "seed", 0)
    fraction = _get(resolved, "run", "train_fraction", 2.0 / 3.0)
    params = _cost_params(resolved)
    dataset = generate_dataset(benchmark, n, seed, fraction)
    out = _prepare_out(args.out, ["sweep.csv"], args.force)
    rows = []
    for bound in bounds:
        bench_b = customize(benchmark, error_bound=bound)
        for pipeline in pipelines:
            _, artifacts = _run_pipeline_once(pipeline, dataset, bench_b, resolved, seed, params)
            r = artifacts.report
            rows.append((bound, pipeline, r.invocation, r.rmse_normalized, r.modeled_speedup))
            print(f"bound {bound:<8g} {pipeline:<20} invocation {r.invocation:.4f} "
                  f"rmse_norm {r.rmse_normalized:.4f} speedup {r.modeled_speedup:.3f}")
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bound", "pipeline", "invocation", "rmse_normalized", "speedup"])
        for bound, pipeline, inv, rmse, speedup in rows:
            writer.writerow([repr(bound), pipeline, repr(inv), repr(rmse), repr(speedup)])
    _write_manifest(out, "sweep", resolved)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    resolved = _resolve(args)
    pipelines = [p.strip() for p in args.pipelines.split(",") if p.strip()]
    if len(pipelines) < 2:
        raise ValueError("compare needs at least 2 pipelines (--pipelines a,b,...)")
    for p in pipelines:
        if p not in PIPELINE_NAMES:
            raise ValueError(f"unknown pipeline {p!r} (known: {', '.join(PIPELINE_NAMES)})")
    benchmark = _resolved_benchmark(resolved)
    n = _get(resolved, "run", "n", 1000)
    seed = _get(resolved, "run", "seed", 0)
    fraction = _get(resolved, "run", "train_fraction", 2.0 / 3.0)
    params = _cost_params(resolved)
    dataset = generate_dataset(benchmark, n, seed, fraction)
    out = _prepare_out(args.out, ["compare.csv"], args.force)
    rows = []
    for pipeline in pipelines:
        _, artifacts = _run_pipeline_once(pipeline, dataset, benchmark, resolved, seed, params)
        r = artifacts.report
        rows.append((pipeline, r.invocation, r.rmse_normalized, r.modeled_speedup, r.modeled_energy_reduction))
    best = max(range(len(rows)), key=lambda i: rows[i][1])
    print(f"{'pipeline':<20} {'invocation':>10} {'rmse_norm':>9} {'speedup':>8} {'energy':>8}")
    for i, (pipeline, inv, rmse, speedup, energy) in enumerate(rows):
        marker = " *" if i == best else ""
        print(f"{pipeline:<20} {inv:>10.4f} {rmse:>9.4f} {speedup:>8.3f} {energy:>8.3f}{marker}")
    with open(out / "compare.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipeline", "invocation", "rmse_normalized", "speedup", "energy_reduction", "best"])
        for i, (pipeline, inv, rmse, speedup, energy) in enumerate(rows):
            writer.writerow([pipeline, repr(inv), repr(rmse), repr(speedup), repr(energy), int(i == best)])
    _write_manifest(out, "compare", resolved)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="approxgate",
        description="Train and evaluate gated neural approximation systems.",
    )
    parser.add_argument("--version", action="version", version=f"approxgate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_benchmark=True):
        if with_benchmark:
            p.add_argument("--benchmark", help="catalog benchmark name")
        p.add_argument("--n", type=int, help="number of samples to draw")
        p.add_argument("--seed", type=int, help="top-level seed")
        p.add_argument("--bound", type=float, help="error-bound override")
        p.add_argument("--train-fraction", dest="train_fraction", type=float)
        p.add_argument("--approx-topology", dest="approx_topology", help="e.g. 6->8->1")
        p.add_argument("--classifier-topology", dest="classifier_topology")
        p.add_argument("--iterations", type=int, help="training rounds per pipeline")
        p.add_argument("--approximators", type=int, help="number of approximators")
        p.add_argument("--policy", choices=["A", "C", "AC"], help="iterative selection policy")
        p.add_argument("--territory-safe-only", dest="territory_safe_only", action="store_const", const=True)
        p.add_argument("--epochs", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--config", help="INI config file ([run]/[pipeline]/[train]/[cost])")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")

    def add_cost(p):
        for flag in ("t-cpu", "t-apx", "t-cls", "t-reload", "e-cpu", "e-apx", "e-cls", "e-reload"):
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=float)
        p.add_argument("--buffer-case", dest="buffer_case", choices=["all_fit", "none_fit", "one_fits"])

    g = sub.add_parser("generate", help="sample a dataset from a benchmark")
    g.add_argument("--benchmark", required=True)
    add_common(g, with_benchmark=False)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a pipeline on a dataset")
    t.add_argument("--dataset", required=True, help="dataset directory")
    t.add_argument("--pipeline", choices=list(PIPELINE_NAMES))
    add_common(t, with_benchmark=False)
    t.set_defaults(func=cmd_train, benchmark=None)

    e = sub.add_parser("eval", help="evaluate a trained system on a dataset")
    e.add_argument("--system", required=True, help="trained system directory")
    e.add_argument("--dataset", required=True, help="dataset directory")
    e.add_argument("--config", help="INI config file")
    e.add_argument("--out", required=True)
    e.add_argument("--force", action="store_true")
    add_cost(e)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="train+evaluate pipelines across error bounds")
    s.add_argument("--bounds", required=True, help="comma-separated positive bounds")
    s.add_argument("--pipelines", required=True, help="comma-separated pipeline names")
    add_common(s)
    add_cost(s)
    s.set_defaults(func=cmd_sweep, pipeline=None)

    c = sub.add_parser("compare", help="compare pipelines on one benchmark")
    c.add_argument("--pipelines", required=True, help="comma-separated pipeline names")
    add_common(c)
    add_cost(c)
    c.set_defaults(func=cmd_compare, pipeline=None)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage message
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
