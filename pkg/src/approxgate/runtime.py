"""Inference-time routing, test-split evaluation, and the analytic
accelerator cost model (time/energy with weight-buffer reload accounting).

Routes are plain class indices: 0 means exact (cpu) computation, k >= 1
means approximator k.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .benchmarks import Benchmark, Dataset, evaluate_exact
from .mlp import forward, forward_batch
from .pipelines import TrainedSystem
from .quality import (
    EvalReport,
    SampleVerdict,
    aggregate_report,
    batch_errors,
    confusion_of,
    label_competitive,
    label_complementary,
)

CPU_ROUTE = 0

BUFFER_CASES = ("all_fit", "none_fit", "one_fits")


@dataclass(frozen=True)
class CostModelParams:
    """Per-invocation time/energy units plus the weight-buffer scenario.

    Defaults are calibration-free stand-ins; absolute speedups are
    configuration-dependent by design.
    """

    t_cpu: float = 1.0
    t_apx: float = 0.1
    t_cls: float = 0.05
    t_reload: float = 0.01
    e_cpu: float = 1.0
    e_apx: float = 0.1
    e_cls: float = 0.05
    e_reload: float = 0.01
    buffer_case: str = "one_fits"

    def __post_init__(self) -> None:
        if self.t_cpu <= 0 or self.e_cpu <= 0:
            raise ValueError("t_cpu and e_cpu must be positive")
        if self.t_apx <= 0 or self.e_apx <= 0:
            raise ValueError("t_apx and e_apx must be positive")
        if min(self.t_cls, self.t_reload, self.e_cls, self.e_reload) < 0:
            raise ValueError("classifier and reload costs must be nonnegative")
        if self.buffer_case not in BUFFER_CASES:
            raise ValueError(f"buffer_case must be one of {BUFFER_CASES}")


def route_name(route: int) -> str:
    return "cpu" if route == CPU_ROUTE else f"A{route}"


@dataclass(frozen=True)
class DispatchResult:
    route: int
    output: np.ndarray
    classifier_evals: int
    confidence: float


def dispatch(system: TrainedSystem, benchmark: Benchmark, input_vec: np.ndarray) -> DispatchResult:
    """Route one input and produce its output.

    mcma: gate argmax (class 0 -> cpu).  mcca: walk the cascade, first
    approving classifier wins.  one_pass/iterative: binary gate.  Cpu
    routes return the exact function value.
    """
    x = np.asarray(input_vec, dtype=float)
    if x.shape != (benchmark.input_dim,):
        raise ValueError(f"expected input of length {benchmark.input_dim}, got {x.shape}")
    xn = benchmark.normalize(x)
    if system.architecture == "mcma":
        dist = forward(system.classifiers[0], xn)
        route = int(np.argmax(dist))
        confidence = float(dist[route])
        evals = 1
    elif system.architecture == "mcca":
        route = CPU_ROUTE
        evals = 0
        confidence = 0.0
        for k, clf in enumerate(system.classifiers, start=1):
            dist = forward(clf, xn)
            evals += 1
            if int(np.argmax(dist)) == 1:
                route = k
                confidence = float(dist[1])
                break
            confidence = float(dist[0])  # rejection confidence of the last pair
    else:
        dist = forward(system.classifiers[0], xn)
        route = 1 if int(np.argmax(dist)) == 1 else CPU_ROUTE
        confidence = float(dist[np.argmax(dist)])
        evals = 1
    if route == CPU_ROUTE:
        output = evaluate_exact(benchmark, x)
    else:
        output = forward(system.approximators[route - 1], xn) * benchmark.target_scale
    return DispatchResult(route=route, output=output, classifier_evals=evals, confidence=confidence)


def _route_batch(system: TrainedSystem, xn: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Routes, classifier-eval counts and confidences for a normalized batch."""
    n = len(xn)
    if system.architecture == "mcma":
        dist = forward_batch(system.classifiers[0], xn)
        routes = dist.argmax(axis=1)
        return routes, np.ones(n, dtype=int), dist[np.arange(n), routes]
    if system.architecture == "mcca":
        routes = np.zeros(n, dtype=int)
        evals = np.zeros(n, dtype=int)
        confidence = np.zeros(n)
        undecided = np.arange(n)
        for k, clf in enumerate(system.classifiers, start=1):
            if len(undecided) == 0:
                break
            dist = forward_batch(clf, xn[undecided])
            evals[undecided] += 1
            approve = dist.argmax(axis=1) == 1
            approved_idx = undecided[approve]
            routes[approved_idx] = k
            confidence[approved_idx] = dist[approve, 1]
            confidence[undecided[~approve]] = dist[~approve, 0]
            undecided = undecided[~approve]
        return routes, evals, confidence
    dist = forward_batch(system.classifiers[0], xn)
    routes = (dist.argmax(axis=1) == 1).astype(int)
    picked = dist.argmax(axis=1)
    return routes, np.ones(n, dtype=int), dist[np.arange(n), picked]


def count_reloads(route_sequence, buffer_case: str) -> int:
    """Weight-buffer reloads along an ordered route sequence.

    all_fit: every approximator resides on chip, zero reloads.  none_fit:
    weights stream layer by layer on every approximator invocation, one
    reload per routed sample.  one_fits: the buffer holds one approximator;
    reload on the first routed sample and on every change of approximator
    between consecutive routed samples (cpu routes do not evict).
    """
    if buffer_case not in BUFFER_CASES:
        raise ValueError(f"buffer_case must be one of {BUFFER_CASES}")
    routes = [int(r) for r in route_sequence]
    if buffer_case == "all_fit":
        return 0
    if buffer_case == "none_fit":
        return sum(1 for r in routes if r != CPU_ROUTE)
    reloads = 0
    resident: int | None = None
    for r in routes:
        if r == CPU_ROUTE:
            continue
        if r != resident:
            reloads += 1
            resident = r
    return reloads


def model_cost(
    n_samples: int,
    cls_evals: int,
    n_approx_routed: int,
    n_cpu_routed: int,
    reloads: int,
    params: CostModelParams,
) -> tuple[float, float]:
    """Modeled (speedup, energy_reduction) against all-cpu execution.

    T_sys = cls_evals*t_cls + n_approx*t_apx + n_cpu*t_cpu + reloads*t_reload;
    speedup = n_samples*t_cpu / T_sys.  Energy is the same shape with the
    e-parameters.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    if n_approx_routed + n_cpu_routed != n_samples:
        raise ValueError("approximator-routed plus cpu-routed must equal n_samples")
    t_sys = (
        cls_evals * params.t_cls
        + n_approx_routed * params.t_apx
        + n_cpu_routed * params.t_cpu
        + reloads * params.t_reload
    )
    e_sys = (
        cls_evals * params.e_cls
        + n_approx_routed * params.e_apx
        + n_cpu_routed * params.e_cpu
        + reloads * params.e_reload
    )
    if t_sys <= 0 or e_sys <= 0:
        raise ValueError("modeled system cost must be positive")
    return (n_samples * params.t_cpu / t_sys, n_samples * params.e_cpu / e_sys)


@dataclass
class EvalArtifacts:
    """Everything one evaluation produces, ready for export."""

    report: EvalReport
    verdicts: list[SampleVerdict]
    routes: np.ndarray
    confidences: np.ndarray
    inputs: np.ndarray
    exact_outputs: np.ndarray


def evaluate(
    system: TrainedSystem,
    benchmark: Benchmark,
    dataset: Dataset,
    params: CostModelParams | None = None,
    split: str = "test",
    include_cpu_routed_rmse: bool = False,
) -> EvalArtifacts:
    """Dispatch every sample of the split in file order and aggregate.

    Reload counting uses the ordered route sequence; all other report
    fields are order-independent.
    """
    if params is None:
        params = CostModelParams()
    if split == "test":
        inputs, exact = dataset.test_inputs, dataset.test_outputs
    elif split == "train":
        inputs, exact = dataset.train_inputs, dataset.train_outputs
    else:
        raise ValueError("split must be 'train' or 'test'")
    if len(inputs) == 0:
        raise ValueError(f"{split} split is empty")
    if dataset.benchmark_name != system.benchmark_name:
        raise ValueError(
            f"dataset benchmark {dataset.benchmark_name!r} does not match "
            f"system benchmark {system.benchmark_name!r}"
        )
    bound = system.error_bound
    xn = benchmark.normalize(inputs)
    errors = np.column_stack(
        [
            batch_errors(benchmark, forward_batch(a, xn) * benchmark.target_scale, exact)
            for a in system.approximators
        ]
    )
    routes, evals, confidences = _route_batch(system, xn)
    if system.architecture == "mcma" and system.allocation == "competitive":
        assigned = label_competitive(errors, bound)
    else:
        assigned = label_complementary(errors, bound)
    verdicts = [
        SampleVerdict(
            sample_index=i,
            per_approx_error=tuple(float(e) for e in errors[i]),
            assigned_label=int(assigned[i]),
            classifier_prediction=int(routes[i]),
            confusion=confusion_of(int(routes[i]), errors[i], bound),
        )
        for i in range(len(inputs))
    ]
    report = aggregate_report(
        verdicts, bound, n_classes=system.n_approximators + 1, include_cpu_routed=include_cpu_routed_rmse
    )
    reloads = count_reloads(routes, params.buffer_case)
    n_routed = int((routes >= 1).sum())
    speedup, energy = model_cost(
        len(inputs), int(evals.sum()), n_routed, len(inputs) - n_routed, reloads, params
    )
    report = replace(
        report,
        cls_evals=int(evals.sum()),
        reload_count=reloads,
        modeled_speedup=speedup,
        modeled_energy_reduction=energy,
        buffer_case=params.buffer_case,
    )
    return EvalArtifacts(
        report=report,
        verdicts=verdicts,
        routes=routes,
        confidences=confidences,
        inputs=inputs,
        exact_outputs=exact,
    )


def write_report(path: str | Path, report: EvalReport, benchmark_name: str, architecture: str) -> None:
    """Flat key-value report file."""
    lines = [
        "format_version = 1",
        f"benchmark = {benchmark_name}",
        f"architecture = {architecture}",
        f"n_samples = {report.n_samples}",
        f"invocation = {report.invocation!r}",
        f"rmse_normalized = {report.rmse_normalized!r}",
        f"confusion_AC = {report.confusion_counts['AC']}",
        f"confusion_nAC = {report.confusion_counts['nAC']}",
        f"confusion_AnC = {report.confusion_counts['AnC']}",
        f"confusion_nAnC = {report.confusion_counts['nAnC']}",
        "per_class_counts = " + ",".join(str(c) for c in report.per_class_counts),
        f"cls_evals = {report.cls_evals}",
        f"reload_count = {report.reload_count}",
        f"buffer_case = {report.buffer_case}",
        f"modeled_speedup = {report.modeled_speedup!r}",
        f"modeled_energy_reduction = {report.modeled_energy_reduction!r}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path: str | Path) -> dict[str, str]:
    """Key-value report file back into a dict of strings."""
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        key, _, value = line.partition(" = ")
        out[key] = value
    return out


def write_routes_csv(path: str | Path, routes: np.ndarray, confidences: np.ndarray) -> None:
    """Route log: sample_index, route, confidence (decision probability)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_index", "route", "confidence"])
        for i, (r, c) in enumerate(zip(routes, confidences)):
            writer.writerow([i, route_name(int(r)), repr(float(c))])
