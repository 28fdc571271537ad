"""Training pipelines producing gated approximation systems.

Four architectures share the same ingredients (approximator MLPs trained on
regression targets, classifier MLPs trained on safe/unsafe labels derived
from approximator errors) but wire them differently:

* one_pass      - approximator once on everything, classifier once on the
                  resulting labels.
* iterative     - alternate retraining; each round the approximator sees
                  only the samples selected by the A/C/AC policy.
* mcca          - cascade of (classifier, approximator) pairs; each new
                  pair trains on the samples every earlier pair rejected.
* mcma          - one (n+1)-class softmax gate routing to n approximators;
                  labels come from complementary (serial claiming) or
                  competitive (lowest error) allocation.

All randomness flows from a single pipeline seed through
:func:`derive_seed`; repeated runs are bit-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .benchmarks import Benchmark, Dataset
from .mlp import (
    Mlp,
    Topology,
    TrainConfig,
    forward_batch,
    init_mlp,
    load_mlp,
    save_mlp,
    train,
)
from .quality import batch_errors, label_complementary, label_competitive

ARCHITECTURES = ("one_pass", "iterative", "mcca", "mcma")
SELECTION_POLICIES = ("A", "C", "AC")
ALLOCATIONS = ("complementary", "competitive")

# Pipeline names accepted by the CLI and sweep/compare front ends.
PIPELINE_NAMES = ("one_pass", "iterative", "mcca", "mcma_complementary", "mcma_competitive")

SYSTEM_FORMAT_VERSION = 1

# Seed-derivation roles (spawn-key path components).
_ROLE_APPROX = 1
_ROLE_CLASSIFIER = 2

# Learning-rate multipliers that differentiate competitively trained
# approximators; cycled by approximator index.
COMPETITIVE_LR_MULTIPLIERS = (1.0, 0.5, 2.0)


def derive_seed(base: int, *path: int) -> int:
    """Child seed for a component: SeedSequence(base) keyed by the path.

    The path is (role, index, round); every network init and every
    training call gets its own deterministic stream.
    """
    seq = np.random.SeedSequence(entropy=int(base), spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs shared by all pipelines; defaults match the desk-scale setup."""

    n_approximators: int = 3
    n_iterations: int = 5
    selection_policy: str = "AC"  # iterative only
    allocation: str = "complementary"  # mcma only
    mcca_convergence_min_gain: float = 0.05
    mcca_min_samples: int = 50
    territory_safe_only: bool = False  # mcma: restrict retraining to safe territory samples
    class_weight_cap: float = 10.0
    approx_train: TrainConfig = field(default_factory=TrainConfig)
    classifier_train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_approximators < 1:
            raise ValueError("n_approximators must be >= 1")
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be >= 1")
        if self.selection_policy not in SELECTION_POLICIES:
            raise ValueError(f"selection_policy must be one of {SELECTION_POLICIES}")
        if self.allocation not in ALLOCATIONS:
            raise ValueError(f"allocation must be one of {ALLOCATIONS}")
        if not 0.0 < self.mcca_convergence_min_gain <= 1.0:
            raise ValueError("mcca_convergence_min_gain must lie in (0, 1]")
        if self.class_weight_cap < 1.0:
            raise ValueError("class_weight_cap must be >= 1")


@dataclass(frozen=True)
class LogEntry:
    """One training round: invocation and normalized RMSE on the train split."""

    round: int
    pair: int  # cascade position for mcca, 0 otherwise
    invocation: float
    rmse_normalized: float
    n_selected: int


@dataclass
class TrainedSystem:
    """Classifier(s) plus approximator(s) with their routing architecture."""

    architecture: str
    approximators: list[Mlp]
    classifiers: list[Mlp]
    benchmark_name: str
    error_bound: float
    training_log: list[LogEntry] = field(default_factory=list)
    allocation: str | None = None  # mcma only
    events: list[str] = field(default_factory=list)

    @property
    def n_approximators(self) -> int:
        return len(self.approximators)


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _class_weights(labels: np.ndarray, cap: float) -> np.ndarray:
    """Inverse-frequency weight per sample, capped; missing classes ignored."""
    classes, counts = np.unique(labels, return_counts=True)
    n = len(labels)
    k = len(classes)
    weight_of = {c: min(cap, n / (k * cnt)) for c, cnt in zip(classes, counts)}
    return np.array([weight_of[c] for c in labels])


def _approx_errors(benchmark: Benchmark, approx: Mlp, inputs_norm: np.ndarray, exact: np.ndarray) -> np.ndarray:
    """Per-sample metric error of one approximator over a normalized batch."""
    preds = forward_batch(approx, inputs_norm) * benchmark.target_scale
    return batch_errors(benchmark, preds, exact)


def _rmse_normalized(errors: np.ndarray, mask: np.ndarray, bound: float) -> float:
    if not mask.any():
        return 0.0
    return float(np.sqrt((errors[mask] ** 2).mean()) / bound)


def _binary_classifier_topology(benchmark: Benchmark) -> Topology:
    return benchmark.classifier_topology


def _multiclass_classifier_topology(benchmark: Benchmark, n_classes: int) -> Topology:
    base = benchmark.classifier_topology
    return Topology(base.layer_sizes[:-1] + (n_classes,), base.hidden_activation, "softmax")


def _train_cfg(base: TrainConfig, base_seed: int, role: int, index: int, round_no: int) -> TrainConfig:
    return replace(base, seed=derive_seed(base_seed, role, index, round_no))


def _train_gated_pair(
    benchmark: Benchmark,
    inputs: np.ndarray,
    exact: np.ndarray,
    bound: float,
    policy: str,
    rounds: int,
    config: PipelineConfig,
    pair_index: int = 0,
) -> tuple[Mlp, Mlp, list[LogEntry], list[str]]:
    """Shared core of one_pass (rounds=1), iterative and each mcca pair.

    Round 1 always trains the approximator on every sample (there is no
    model yet to select with); the configured policy applies from round 2.
    The classifier always retrains on all samples with fresh labels.
    """
    xn = benchmark.normalize(inputs)
    targets = exact / benchmark.target_scale
    approx = init_mlp(benchmark.approx_topology, derive_seed(config.seed, _ROLE_APPROX, pair_index, 0))
    clf = init_mlp(_binary_classifier_topology(benchmark), derive_seed(config.seed, _ROLE_CLASSIFIER, pair_index, 0))
    log: list[LogEntry] = []
    events: list[str] = []
    n = len(inputs)
    selected = np.arange(n)
    errors = np.full(n, np.inf)
    approves = np.zeros(n, dtype=bool)
    for r in range(1, rounds + 1):
        if r > 1:
            a_mask = errors <= bound
            if policy == "A":
                mask = a_mask
            elif policy == "C":
                mask = approves
            else:
                mask = a_mask & approves
            if mask.any():
                selected = np.flatnonzero(mask)
            else:
                events.append(f"pair {pair_index} round {r}: empty {policy} selection, reusing previous subset")
        train(
            approx,
            xn[selected],
            targets[selected],
            "mean_squared_error",
            _train_cfg(config.approx_train, config.seed, _ROLE_APPROX, pair_index, r),
        )
        errors = _approx_errors(benchmark, approx, xn, exact)
        labels = (errors <= bound).astype(int)
        if labels.min() == labels.max():
            events.append(
                f"pair {pair_index} round {r}: degenerate labels (all {'safe' if labels[0] else 'unsafe'})"
            )
        train(
            clf,
            xn,
            _one_hot(labels, 2),
            "cross_entropy",
            _train_cfg(config.classifier_train, config.seed, _ROLE_CLASSIFIER, pair_index, r),
            sample_weights=_class_weights(labels, config.class_weight_cap),
        )
        approves = forward_batch(clf, xn).argmax(axis=1) == 1
        log.append(
            LogEntry(
                round=r,
                pair=pair_index,
                invocation=float(approves.mean()),
                rmse_normalized=_rmse_normalized(errors, approves, bound),
                n_selected=int(len(selected)),
            )
        )
    return approx, clf, log, events


def train_one_pass(dataset: Dataset, benchmark: Benchmark, config: PipelineConfig) -> TrainedSystem:
    """Baseline: approximator trained once on everything, then the
    classifier once on the safe/unsafe labels its errors induce."""
    approx, clf, log, events = _train_gated_pair(
        benchmark,
        dataset.train_inputs,
        dataset.train_outputs,
        benchmark.error_bound,
        policy="A",
        rounds=1,
        config=config,
    )
    return TrainedSystem(
        architecture="one_pass",
        approximators=[approx],
        classifiers=[clf],
        benchmark_name=benchmark.name,
        error_bound=benchmark.error_bound,
        training_log=log,
        events=events,
    )


def train_iterative(dataset: Dataset, benchmark: Benchmark, config: PipelineConfig) -> TrainedSystem:
    """Alternating retraining with A / C / AC training-sample selection."""
    approx, clf, log, events = _train_gated_pair(
        benchmark,
        dataset.train_inputs,
        dataset.train_outputs,
        benchmark.error_bound,
        policy=config.selection_policy,
        rounds=config.n_iterations,
        config=config,
    )
    return TrainedSystem(
        architecture="iterative",
        approximators=[approx],
        classifiers=[clf],
        benchmark_name=benchmark.name,
        error_bound=benchmark.error_bound,
        training_log=log,
        events=events,
    )


def train_mcca(dataset: Dataset, benchmark: Benchmark, config: PipelineConfig) -> TrainedSystem:
    """Cascaded pairs: each pair trains (iteratively, category C from round
    2) on the samples all earlier classifiers rejected.

    The cascade grows until a pair accepts less than
    ``mcca_convergence_min_gain`` of its remaining samples (that pair is
    discarded), the remaining set drops below ``mcca_min_samples``, or
    ``n_approximators`` pairs exist.  The first pair is always kept so the
    system can route.
    """
    inputs = dataset.train_inputs
    exact = dataset.train_outputs
    bound = benchmark.error_bound
    remaining = np.arange(len(inputs))
    approximators: list[Mlp] = []
    classifiers: list[Mlp] = []
    log: list[LogEntry] = []
    events: list[str] = []
    for pair in range(1, config.n_approximators + 1):
        if len(remaining) < config.mcca_min_samples:
            events.append(f"cascade stopped before pair {pair}: {len(remaining)} samples left")
            break
        approx, clf, pair_log, pair_events = _train_gated_pair(
            benchmark,
            inputs[remaining],
            exact[remaining],
            bound,
            policy="C",
            rounds=config.n_iterations,
            config=config,
            pair_index=pair,
        )
        events.extend(pair_events)
        approved = forward_batch(clf, benchmark.normalize(inputs[remaining])).argmax(axis=1) == 1
        accepted_fraction = float(approved.mean())
        if accepted_fraction < config.mcca_convergence_min_gain and pair > 1:
            events.append(
                f"pair {pair} discarded: accepted fraction {accepted_fraction:.4f} "
                f"< {config.mcca_convergence_min_gain}"
            )
            break
        if accepted_fraction < config.mcca_convergence_min_gain:
            events.append(
                f"pair 1 kept despite accepted fraction {accepted_fraction:.4f} "
                f"< {config.mcca_convergence_min_gain} (a cascade needs one pair)"
            )
        approximators.append(approx)
        classifiers.append(clf)
        log.extend(pair_log)
        remaining = remaining[~approved]
        if accepted_fraction < config.mcca_convergence_min_gain:
            break
    return TrainedSystem(
        architecture="mcca",
        approximators=approximators,
        classifiers=classifiers,
        benchmark_name=benchmark.name,
        error_bound=bound,
        training_log=log,
        events=events,
    )


def train_mcma(
    dataset: Dataset,
    benchmark: Benchmark,
    config: PipelineConfig,
    trace_sink: dict | None = None,
) -> TrainedSystem:
    """Multiclass gate over n approximators.

    Initialization: complementary allocation trains approximators serially,
    each on the samples every earlier one failed; competitive allocation
    trains all of them on everything with distinct seeds and perturbed
    learning rates.  Each iteration then relabels all samples (serial
    claiming or lowest error), retrains the softmax gate on the labels, and
    retrains each approximator on the territory the gate assigns to it.

    ``trace_sink``, when given, collects per-round labels and errors for
    diagnostics.
    """
    n_approx = config.n_approximators
    bound = benchmark.error_bound
    inputs = dataset.train_inputs
    exact = dataset.train_outputs
    xn = benchmark.normalize(inputs)
    targets = exact / benchmark.target_scale
    n = len(inputs)
    events: list[str] = []
    log: list[LogEntry] = []

    approximators = [
        init_mlp(benchmark.approx_topology, derive_seed(config.seed, _ROLE_APPROX, k, 0))
        for k in range(1, n_approx + 1)
    ]
    if config.allocation == "complementary":
        unclaimed = np.ones(n, dtype=bool)
        for k, approx in enumerate(approximators, start=1):
            if not unclaimed.any():
                events.append(f"init: no samples left for approximator {k}, kept at initialization")
                continue
            idx = np.flatnonzero(unclaimed)
            train(
                approx,
                xn[idx],
                targets[idx],
                "mean_squared_error",
                _train_cfg(config.approx_train, config.seed, _ROLE_APPROX, k, 0),
            )
            errors_k = _approx_errors(benchmark, approx, xn, exact)
            unclaimed &= errors_k > bound
    else:
        for k, approx in enumerate(approximators, start=1):
            lr_mult = COMPETITIVE_LR_MULTIPLIERS[(k - 1) % len(COMPETITIVE_LR_MULTIPLIERS)]
            cfg = replace(
                config.approx_train,
                learning_rate=config.approx_train.learning_rate * lr_mult,
                seed=derive_seed(config.seed, _ROLE_APPROX, k, 0),
            )
            train(approx, xn, targets, "mean_squared_error", cfg)

    clf = init_mlp(
        _multiclass_classifier_topology(benchmark, n_approx + 1),
        derive_seed(config.seed, _ROLE_CLASSIFIER, 0, 0),
    )
    label_fn = label_complementary if config.allocation == "complementary" else label_competitive

    for r in range(1, config.n_iterations + 1):
        errors = np.column_stack(
            [_approx_errors(benchmark, a, xn, exact) for a in approximators]
        )
        labels = label_fn(errors, bound)
        if trace_sink is not None:
            trace_sink.setdefault("rounds", []).append(
                {"round": r, "errors": errors.copy(), "labels": labels.copy()}
            )
        train(
            clf,
            xn,
            _one_hot(labels, n_approx + 1),
            "cross_entropy",
            _train_cfg(config.classifier_train, config.seed, _ROLE_CLASSIFIER, 0, r),
            sample_weights=_class_weights(labels, config.class_weight_cap),
        )
        territories = forward_batch(clf, xn).argmax(axis=1)
        for k, approx in enumerate(approximators, start=1):
            mask = territories == k
            if config.territory_safe_only:
                mask &= errors[:, k - 1] <= bound
            if not mask.any():
                events.append(f"round {r}: empty territory for approximator {k}, weights kept")
                continue
            idx = np.flatnonzero(mask)
            train(
                approx,
                xn[idx],
                targets[idx],
                "mean_squared_error",
                _train_cfg(config.approx_train, config.seed, _ROLE_APPROX, k, r),
            )
        end_errors = np.column_stack(
            [_approx_errors(benchmark, a, xn, exact) for a in approximators]
        )
        routed = territories >= 1
        routed_err = np.where(routed, end_errors[np.arange(n), np.maximum(territories, 1) - 1], 0.0)
        log.append(
            LogEntry(
                round=r,
                pair=0,
                invocation=float(routed.mean()),
                rmse_normalized=_rmse_normalized(routed_err, routed, bound),
                n_selected=int(routed.sum()),
            )
        )
    return TrainedSystem(
        architecture="mcma",
        approximators=approximators,
        classifiers=[clf],
        benchmark_name=benchmark.name,
        error_bound=bound,
        training_log=log,
        allocation=config.allocation,
        events=events,
    )


def train_pipeline(
    pipeline: str, dataset: Dataset, benchmark: Benchmark, config: PipelineConfig
) -> TrainedSystem:
    """Dispatch on a pipeline name from :data:`PIPELINE_NAMES`."""
    if pipeline == "one_pass":
        return train_one_pass(dataset, benchmark, config)
    if pipeline == "iterative":
        return train_iterative(dataset, benchmark, config)
    if pipeline == "mcca":
        return train_mcca(dataset, benchmark, config)
    if pipeline == "mcma_complementary":
        return train_mcma(dataset, benchmark, replace(config, allocation="complementary"))
    if pipeline == "mcma_competitive":
        return train_mcma(dataset, benchmark, replace(config, allocation="competitive"))
    raise ValueError(f"unknown pipeline {pipeline!r} (known: {', '.join(PIPELINE_NAMES)})")


# ---------------------------------------------------------------------------
# persistence


def save_system(system: TrainedSystem, out_dir: str | Path, config: PipelineConfig | None = None) -> Path:
    """Persist a trained system as a directory: manifest, log CSV, models."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": SYSTEM_FORMAT_VERSION,
        "architecture": system.architecture,
        "benchmark": system.benchmark_name,
        "error_bound": system.error_bound,
        "n_approximators": system.n_approximators,
        "n_classifiers": len(system.classifiers),
        "allocation": system.allocation,
        "events": system.events,
    }
    if config is not None:
        cfg = asdict(config)
        manifest["config"] = cfg
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(out / "training_log.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "pair", "invocation", "rmse_normalized", "n_selected"])
        for e in system.training_log:
            writer.writerow([e.round, e.pair, repr(e.invocation), repr(e.rmse_normalized), e.n_selected])
    for k, approx in enumerate(system.approximators, start=1):
        save_mlp(approx, out / f"approximator_{k}.txt")
    for k, clf in enumerate(system.classifiers, start=1):
        save_mlp(clf, out / f"classifier_{k}.txt")
    return out


def load_system(in_dir: str | Path) -> TrainedSystem:
    """Read a system directory written by :func:`save_system`."""
    src = Path(in_dir)
    manifest_path = src / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no trained system at {src} (missing manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != SYSTEM_FORMAT_VERSION:
        raise ValueError(f"{manifest_path}: unsupported system format version")
    approximators = [
        load_mlp(src / f"approximator_{k}.txt") for k in range(1, manifest["n_approximators"] + 1)
    ]
    classifiers = [
        load_mlp(src / f"classifier_{k}.txt") for k in range(1, manifest["n_classifiers"] + 1)
    ]
    log: list[LogEntry] = []
    log_path = src / "training_log.csv"
    if log_path.exists():
        with open(log_path, newline="") as fh:
            for row in csv.DictReader(fh):
                log.append(
                    LogEntry(
                        round=int(row["round"]),
                        pair=int(row["pair"]),
                        invocation=float(row["invocation"]),
                        rmse_normalized=float(row["rmse_normalized"]),
                        n_selected=int(row["n_selected"]),
                    )
                )
    return TrainedSystem(
        architecture=manifest["architecture"],
        approximators=approximators,
        classifiers=classifiers,
        benchmark_name=manifest["benchmark"],
        error_bound=float(manifest["error_bound"]),
        training_log=log,
        allocation=manifest.get("allocation"),
        events=list(manifest.get("events", [])),
    )
