"""Per-sample approximation error, safe-to-approximate labeling, confusion
accounting and aggregate metrics (invocation, bound-normalized RMSE).

Labeling conventions: class 0 is nC ("no approximator is safe, compute
exactly"); class k >= 1 names approximator k.  An error exactly equal to
the bound counts as safe.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .benchmarks import RELATIVE_ERROR_FLOOR, Benchmark

CONFUSION_KINDS = ("AC", "nAC", "AnC", "nAnC")


def sample_error(benchmark: Benchmark, approx_output: np.ndarray, exact_output: np.ndarray) -> float:
    """Scalar error of one approximated sample under the benchmark metric.

    Vector outputs are averaged over dimensions; misclassification compares
    argmax positions and returns 0 or 1.
    """
    a = np.asarray(approx_output, dtype=float)
    e = np.asarray(exact_output, dtype=float)
    if a.shape != (benchmark.output_dim,) or e.shape != (benchmark.output_dim,):
        raise ValueError(
            f"outputs must have length {benchmark.output_dim}, got {a.shape} and {e.shape}"
        )
    if benchmark.error_metric == "absolute":
        return float(np.abs(a - e).mean())
    if benchmark.error_metric == "relative":
        denom = np.maximum(np.abs(e), RELATIVE_ERROR_FLOOR)
        return float((np.abs(a - e) / denom).mean())
    return 0.0 if int(np.argmax(a)) == int(np.argmax(e)) else 1.0


def batch_errors(benchmark: Benchmark, approx_outputs: np.ndarray, exact_outputs: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sample_error` over (n, output_dim) arrays."""
    a = np.asarray(approx_outputs, dtype=float)
    e = np.asarray(exact_outputs, dtype=float)
    if a.shape != e.shape:
        raise ValueError("approx and exact batches must have matching shapes")
    if benchmark.error_metric == "absolute":
        return np.abs(a - e).mean(axis=1)
    if benchmark.error_metric == "relative":
        denom = np.maximum(np.abs(e), RELATIVE_ERROR_FLOOR)
        return (np.abs(a - e) / denom).mean(axis=1)
    return (a.argmax(axis=1) != e.argmax(axis=1)).astype(float)


def is_safe(error: float, bound: float) -> bool:
    """True iff the error is within the bound (boundary inclusive)."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    return error <= bound


def label_complementary(errors_per_approx: np.ndarray, bound: float) -> np.ndarray:
    """Serial claiming: each sample gets the smallest approximator index
    whose error is within the bound, or 0 (nC) when none qualifies."""
    e = np.asarray(errors_per_approx, dtype=float)
    if e.ndim != 2 or e.size == 0:
        raise ValueError("need a nonempty (n_samples, n_approx) error matrix")
    safe = e <= bound
    labels = np.zeros(len(e), dtype=int)
    any_safe = safe.any(axis=1)
    labels[any_safe] = safe[any_safe].argmax(axis=1) + 1
    return labels


def label_competitive(errors_per_approx: np.ndarray, bound: float) -> np.ndarray:
    """Lowest-error claiming: argmin approximator (ties to the lowest
    index) when that minimum is within the bound, otherwise 0 (nC)."""
    e = np.asarray(errors_per_approx, dtype=float)
    if e.ndim != 2 or e.size == 0:
        raise ValueError("need a nonempty (n_samples, n_approx) error matrix")
    best = e.argmin(axis=1)
    labels = np.where(e[np.arange(len(e)), best] <= bound, best + 1, 0)
    return labels.astype(int)


@dataclass(frozen=True)
class SampleVerdict:
    """Routing outcome of one evaluated sample."""

    sample_index: int
    per_approx_error: tuple[float, ...]
    assigned_label: int  # ground-truth class under the system's labeling rule
    classifier_prediction: int  # routed class: 0 = cpu, k >= 1 = approximator k
    confusion: str


def confusion_of(classifier_prediction: int, per_approx_error: np.ndarray, bound: float) -> str:
    """Confusion category of one routed sample.

    The ground-truth "safe" bit uses the routed approximator's error; for
    cpu-routed samples it uses the best approximator's error, so AnC counts
    exactly the abandoned safe-to-approximate samples.
    """
    errors = np.asarray(per_approx_error, dtype=float)
    routed = classifier_prediction >= 1
    if routed:
        safe = errors[classifier_prediction - 1] <= bound
    else:
        safe = errors.min() <= bound
    if safe and routed:
        return "AC"
    if not safe and routed:
        return "nAC"
    if safe and not routed:
        return "AnC"
    return "nAnC"


@dataclass
class EvalReport:
    """Aggregate evaluation metrics over one split."""

    n_samples: int
    invocation: float
    rmse_normalized: float
    confusion_counts: dict[str, int]
    per_class_counts: list[int]
    cls_evals: int = 0
    reload_count: int = 0
    modeled_speedup: float = 1.0
    modeled_energy_reduction: float = 1.0
    buffer_case: str = "all_fit"


def aggregate_report(
    verdicts: list[SampleVerdict],
    bound: float,
    n_classes: int,
    include_cpu_routed: bool = False,
) -> EvalReport:
    """Fold verdicts into an EvalReport (cost fields left at defaults).

    ``rmse_normalized`` is the RMSE of approximator-routed samples divided
    by the bound.  With ``include_cpu_routed`` the mean also covers
    cpu-routed samples at error zero (exact computation), a diagnostic
    variant only.
    """
    if not verdicts:
        raise ValueError("cannot aggregate an empty verdict list")
    preds = np.array([v.classifier_prediction for v in verdicts])
    routed = preds >= 1
    invocation = float(routed.mean())
    sq = np.array(
        [v.per_approx_error[v.classifier_prediction - 1] ** 2 if v.classifier_prediction >= 1 else 0.0 for v in verdicts]
    )
    if include_cpu_routed:
        mean_sq = float(sq.mean())
    else:
        mean_sq = float(sq[routed].mean()) if routed.any() else 0.0
    rmse_normalized = float(np.sqrt(mean_sq) / bound)
    confusion = {kind: 0 for kind in CONFUSION_KINDS}
    for v in verdicts:
        confusion[v.confusion] += 1
    per_class = [int((preds == c).sum()) for c in range(n_classes)]
    return EvalReport(
        n_samples=len(verdicts),
        invocation=invocation,
        rmse_normalized=rmse_normalized,
        confusion_counts=confusion,
        per_class_counts=per_class,
    )


def write_verdicts_csv(
    path: str | Path,
    inputs: np.ndarray,
    exact_outputs: np.ndarray,
    verdicts: list[SampleVerdict],
) -> None:
    """Verdict export: one row per sample with inputs, exact outputs,
    per-approximator errors, assigned label, routed class and confusion."""
    inputs = np.asarray(inputs, dtype=float)
    exact_outputs = np.asarray(exact_outputs, dtype=float)
    n_approx = len(verdicts[0].per_approx_error)
    header = (
        ["sample_index"]
        + [f"x{i}" for i in range(inputs.shape[1])]
        + [f"y{j}" for j in range(exact_outputs.shape[1])]
        + [f"err_a{k}" for k in range(1, n_approx + 1)]
        + ["assigned_label", "classifier_prediction", "confusion"]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, y, v in zip(inputs, exact_outputs, verdicts):
            writer.writerow(
                [v.sample_index]
                + [repr(float(c)) for c in x]
                + [repr(float(c)) for c in y]
                + [repr(float(e)) for e in v.per_approx_error]
                + [v.assigned_label, v.classifier_prediction, v.confusion]
            )


def mean_nearest_neighbor_distance(points: np.ndarray) -> float:
    """Mean distance from each point to its nearest other point.

    The dispersion statistic used to compare how selection policies spread
    their accepted samples; lower means tighter clustering.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or len(pts) < 2:
        raise ValueError("need at least two points")
    diffs = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt((diffs * diffs).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    return float(dist.min(axis=1).mean())
