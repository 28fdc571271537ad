"""Benchmark catalog: analytic target functions with samplers, exact
evaluators, error metrics, error bounds and default network topologies,
plus deterministic dataset generation and CSV persistence.

Every catalog value (ranges, constants, bounds, topologies) is defined
here and can be overridden through configuration; the functions below are
documented stand-ins chosen for reproducibility at desk scale.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .mlp import Topology

ERROR_METRICS = ("absolute", "relative", "misclassification")

RELATIVE_ERROR_FLOOR = 1e-6  # denominator floor for the relative metric

DATASET_FORMAT_VERSION = 1

# Names from the historical suite that this catalog deliberately does not
# reproduce; they fail with a pointer instead of a silent stand-in.
UNSUPPORTED_BENCHMARKS = {
    "fft": "fft is not part of this catalog (poor fit for approximation); "
    "pick one of the analytic benchmarks instead",
    "jpeg": "jpeg is not part of this catalog (file-based workload); "
    "pick one of the analytic benchmarks instead",
}


@dataclass(frozen=True)
class Benchmark:
    """A target function plus everything needed to sample and score it."""

    name: str
    input_dim: int
    output_dim: int
    ranges: tuple[tuple[float, float], ...]  # per-dimension sampler ranges
    error_metric: str
    error_bound: float
    approx_topology: Topology
    classifier_topology: Topology
    fn: Callable[[np.ndarray], np.ndarray]
    integer_dims: tuple[int, ...] = ()  # dims sampled on integers (inclusive)
    target_scale: float = 1.0  # training targets divided by this

    def __post_init__(self) -> None:
        if self.error_metric not in ERROR_METRICS:
            raise ValueError(f"unknown error metric {self.error_metric!r}")
        if self.error_bound <= 0:
            raise ValueError("error_bound must be positive")
        if len(self.ranges) != self.input_dim:
            raise ValueError("one (lo, hi) range per input dimension required")
        if any(hi <= lo for lo, hi in self.ranges):
            raise ValueError("each range must satisfy lo < hi")

    def in_support(self, x: np.ndarray) -> bool:
        for i, (lo, hi) in enumerate(self.ranges):
            if not lo <= x[i] <= hi:
                return False
        for i in self.integer_dims:
            if abs(x[i] - round(x[i])) > 1e-9:
                return False
        return True

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Map inputs into [0, 1] per dimension; the convention every
        network in this package is trained and queried under."""
        lo = np.array([r[0] for r in self.ranges])
        hi = np.array([r[1] for r in self.ranges])
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)


def evaluate_exact(benchmark: Benchmark, x: np.ndarray) -> np.ndarray:
    """Deterministic ground-truth output; errors outside the sampler support."""
    x = np.asarray(x, dtype=float)
    if x.shape != (benchmark.input_dim,):
        raise ValueError(
            f"{benchmark.name}: expected input of length {benchmark.input_dim}, got {x.shape}"
        )
    if not benchmark.in_support(x):
        raise ValueError(f"{benchmark.name}: input {x.tolist()} outside sampler support")
    out = np.asarray(benchmark.fn(x), dtype=float)
    return out.reshape(benchmark.output_dim)


def evaluate_exact_batch(benchmark: Benchmark, xs: np.ndarray) -> np.ndarray:
    return np.vstack([evaluate_exact(benchmark, x) for x in np.asarray(xs, dtype=float)])


# ---------------------------------------------------------------------------
# target functions


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def _blackscholes(x: np.ndarray) -> np.ndarray:
    """European option price, closed form.

    Inputs: spot S, strike K, risk-free rate r, volatility sigma, maturity
    T (years), option type (< 0.5 call, otherwise put).
    """
    s, k, r, sigma, t, kind = x
    st = sigma * math.sqrt(t)
    d1 = (math.log(s / k) + (r + 0.5 * sigma * sigma) * t) / st
    d2 = d1 - st
    discounted = k * math.exp(-r * t)
    call = s * _norm_cdf(d1) - discounted * _norm_cdf(d2)
    if kind < 0.5:
        return np.array([call])
    # put-call parity
    return np.array([call - s + discounted])


def bessel_jn(n: int, x: float) -> float:
    """Bessel function of the first kind J_n for integer n >= 0, x >= 0.

    Downward (Miller) recurrence normalized with J_0 + 2*sum J_{2k} = 1.
    Stable for every order, unlike upward recurrence when n exceeds x.
    """
    if n < 0:
        raise ValueError("order must be >= 0")
    if x < 0:
        raise ValueError("argument must be >= 0")
    if x == 0.0:
        return 1.0 if n == 0 else 0.0
    start = max(n, int(x)) + 30
    if start % 2:
        start += 1
    j_next = 0.0  # J_{k+1}
    j_cur = 1e-30  # J_k at an arbitrary scale
    captured = j_cur if n == start else 0.0
    even_sum = j_cur if start % 2 == 0 else 0.0
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / x) * j_cur - j_next
        j_next = j_cur
        j_cur = j_prev
        if abs(j_cur) > 1e100:
            j_cur *= 1e-100
            j_next *= 1e-100
            even_sum *= 1e-100
            captured *= 1e-100
        idx = k - 1
        if idx == n:
            captured = j_cur
        if idx > 0 and idx % 2 == 0:
            even_sum += j_cur
    norm = j_cur + 2.0 * even_sum  # j_cur is now J_0 at the running scale
    return captured / norm


def _bessel(x: np.ndarray) -> np.ndarray:
    return np.array([bessel_jn(int(round(x[0])), float(x[1]))])


def _sobel(x: np.ndarray) -> np.ndarray:
    """Gradient magnitude of a 3x3 intensity window (row-major input).

    Written as differences of identically-shaped partial sums so a
    constant window cancels to exactly zero.
    """
    w = x.reshape(3, 3)
    gx = (w[0, 2] + 2.0 * w[1, 2] + w[2, 2]) - (w[0, 0] + 2.0 * w[1, 0] + w[2, 0])
    gy = (w[2, 0] + 2.0 * w[2, 1] + w[2, 2]) - (w[0, 0] + 2.0 * w[0, 1] + w[0, 2])
    return np.array([math.hypot(gx, gy)])


# Fixed centroids: part of the benchmark definition, so the target is pure.
KMEANS_CENTROIDS = np.array(
    [
        [0.20, 0.25, 0.15, 0.30, 0.20, 0.25],
        [0.75, 0.80, 0.70, 0.65, 0.80, 0.75],
        [0.25, 0.70, 0.30, 0.75, 0.25, 0.70],
        [0.80, 0.20, 0.75, 0.15, 0.80, 0.20],
    ]
)


def _kmeans(x: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(KMEANS_CENTROIDS - x, axis=1)
    return np.array([float(d.min())])


ARM_L1 = 0.5  # fixed link lengths of the 2-joint arm
ARM_L2 = 0.5


def _inversek2j(x: np.ndarray) -> np.ndarray:
    """Joint angles (theta1, theta2) reaching target (x, y); elbow-up branch."""
    px, py = x
    r2 = px * px + py * py
    c2 = (r2 - ARM_L1 * ARM_L1 - ARM_L2 * ARM_L2) / (2.0 * ARM_L1 * ARM_L2)
    theta2 = math.acos(max(-1.0, min(1.0, c2)))
    theta1 = math.atan2(py, px) - math.atan2(
        ARM_L2 * math.sin(theta2), ARM_L1 + ARM_L2 * math.cos(theta2)
    )
    return np.array([theta1, theta2])


def _tri_interval(proj: np.ndarray, dist: np.ndarray) -> tuple[float, float] | None:
    """Parameter interval where a triangle crosses the intersection line.

    ``proj`` holds the vertex projections onto the line direction, ``dist``
    the signed distances to the other triangle's plane.  Returns None for
    the (near-)coplanar case.
    """
    d0, d1, d2 = dist
    if d0 * d1 > 0 and d0 * d2 > 0:
        return None  # fully on one side; caller already rejected this
    # pick the vertex that sits alone on its side of the plane
    if d0 * d1 > 0:
        lone, a, b = 2, 0, 1
    elif d0 * d2 > 0:
        lone, a, b = 1, 0, 2
    elif d1 * d2 > 0 or d0 != 0.0:
        lone, a, b = 0, 1, 2
    elif d1 != 0.0:
        lone, a, b = 1, 0, 2
    elif d2 != 0.0:
        lone, a, b = 2, 0, 1
    else:
        return None  # all distances zero: coplanar
    t1 = proj[a] + (proj[lone] - proj[a]) * dist[a] / (dist[a] - dist[lone])
    t2 = proj[b] + (proj[lone] - proj[b]) * dist[b] / (dist[b] - dist[lone])
    return (min(t1, t2), max(t1, t2))


def _segments_intersect_2d(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if ((o1 > 0) != (o2 > 0)) and ((o3 > 0) != (o4 > 0)):
        return True
    return False


def _point_in_tri_2d(p, tri) -> bool:
    def sign(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    s1 = sign(tri[0], tri[1], p)
    s2 = sign(tri[1], tri[2], p)
    s3 = sign(tri[2], tri[0], p)
    has_neg = (s1 < 0) or (s2 < 0) or (s3 < 0)
    has_pos = (s1 > 0) or (s2 > 0) or (s3 > 0)
    return not (has_neg and has_pos)


def _coplanar_tri_tri(t1: np.ndarray, t2: np.ndarray, normal: np.ndarray) -> bool:
    drop = int(np.argmax(np.abs(normal)))
    keep = [i for i in range(3) if i != drop]
    a = t1[:, keep]
    b = t2[:, keep]
    for i in range(3):
        for j in range(3):
            if _segments_intersect_2d(a[i], a[(i + 1) % 3], b[j], b[(j + 1) % 3]):
                return True
    return _point_in_tri_2d(a[0], b) or _point_in_tri_2d(b[0], a)


def triangles_intersect(t1: np.ndarray, t2: np.ndarray) -> bool:
    """Interval-overlap triangle-triangle intersection test in 3-d.

    Each argument is a (3, 3) array of vertices.  Plane/plane rejection
    first, then the projected-interval overlap test on the intersection
    line, with a 2-d fallback for coplanar pairs.
    """
    t1 = np.asarray(t1, dtype=float).reshape(3, 3)
    t2 = np.asarray(t2, dtype=float).reshape(3, 3)
    n2 = np.cross(t2[1] - t2[0], t2[2] - t2[0])
    d2 = -float(n2 @ t2[0])
    dist1 = t1 @ n2 + d2
    if (dist1 > 0).all() or (dist1 < 0).all():
        return False
    n1 = np.cross(t1[1] - t1[0], t1[2] - t1[0])
    d1 = -float(n1 @ t1[0])
    dist2 = t2 @ n1 + d1
    if (dist2 > 0).all() or (dist2 < 0).all():
        return False
    direction = np.cross(n1, n2)
    if np.abs(direction).max() < 1e-12:
        return _coplanar_tri_tri(t1, t2, n1)
    axis = int(np.argmax(np.abs(direction)))
    i1 = _tri_interval(t1[:, axis], dist1)
    i2 = _tri_interval(t2[:, axis], dist2)
    if i1 is None or i2 is None:
        return _coplanar_tri_tri(t1, t2, n1)
    return i1[0] <= i2[1] and i2[0] <= i1[1]


def _jmeint(x: np.ndarray) -> np.ndarray:
    """Triangle-pair intersection indicator as a one-hot pair.

    Inputs: 18 coordinates (two triangles, three xyz vertices each).
    Output [1, 0] when disjoint, [0, 1] when intersecting.
    """
    t1 = x[:9].reshape(3, 3)
    t2 = x[9:].reshape(3, 3)
    hit = triangles_intersect(t1, t2)
    return np.array([0.0, 1.0]) if hit else np.array([1.0, 0.0])


# Three-regime synthetic target: gentle one-hump pieces separated by level
# jumps that dwarf the error bound.  A small network fits any single piece
# easily but cannot track all three at once, which is exactly the situation
# multi-approximator routing is meant to exploit.
PIECEWISE_BREAKS = (1.0, 2.0)
PIECEWISE_LEVELS = (1.0, 5.0, 9.0)


def _piecewise3(x: np.ndarray) -> np.ndarray:
    v = float(x[0])
    if v < PIECEWISE_BREAKS[0]:
        return np.array([PIECEWISE_LEVELS[0] + 0.8 * math.sin(math.pi * v)])
    if v < PIECEWISE_BREAKS[1]:
        return np.array([PIECEWISE_LEVELS[1] - 2.0 * (v - 1.5) ** 2])
    return np.array([PIECEWISE_LEVELS[2] + 0.8 * math.sin(math.pi * (v - 2.0))])


# ---------------------------------------------------------------------------
# catalog


def _topo(spec: str, output_activation: str = "linear") -> Topology:
    return Topology.from_string(spec, output_activation=output_activation)


def _make_catalog() -> dict[str, Benchmark]:
    entries = [
        Benchmark(
            name="blackscholes",
            input_dim=6,
            output_dim=1,
            ranges=((50.0, 150.0), (50.0, 150.0), (0.01, 0.10), (0.05, 0.60), (0.1, 2.0), (0.0, 1.0)),
            error_metric="relative",
            error_bound=0.1,
            approx_topology=_topo("6->8->8->1"),
            classifier_topology=_topo("6->8->2", "softmax"),
            fn=_blackscholes,
            target_scale=50.0,
        ),
        Benchmark(
            name="bessel",
            input_dim=2,
            output_dim=1,
            ranges=((0.0, 5.0), (0.0, 20.0)),
            integer_dims=(0,),
            error_metric="relative",
            error_bound=0.1,
            approx_topology=_topo("2->8->8->1"),
            classifier_topology=_topo("2->8->2", "softmax"),
            fn=_bessel,
        ),
        Benchmark(
            name="sobel",
            input_dim=9,
            output_dim=1,
            ranges=tuple(((0.0, 1.0),) * 9),
            error_metric="relative",
            error_bound=0.1,
            approx_topology=_topo("9->8->1"),
            classifier_topology=_topo("9->8->2", "softmax"),
            fn=_sobel,
            target_scale=2.0,
        ),
        Benchmark(
            name="kmeans",
            input_dim=6,
            output_dim=1,
            ranges=tuple(((0.0, 1.0),) * 6),
            error_metric="relative",
            error_bound=0.1,
            approx_topology=_topo("6->8->8->1"),
            classifier_topology=_topo("6->8->2", "softmax"),
            fn=_kmeans,
        ),
        Benchmark(
            name="inversek2j",
            input_dim=2,
            output_dim=2,
            ranges=((0.05, 0.65), (0.05, 0.65)),
            error_metric="relative",
            error_bound=0.1,
            approx_topology=_topo("2->8->8->2"),
            classifier_topology=_topo("2->8->2", "softmax"),
            fn=_inversek2j,
        ),
        Benchmark(
            name="jmeint",
            input_dim=18,
            output_dim=2,
            ranges=tuple(((0.0, 1.0),) * 18),
            error_metric="misclassification",
            error_bound=0.5,
            approx_topology=_topo("18->16->2"),
            classifier_topology=_topo("18->8->2", "softmax"),
            fn=_jmeint,
        ),
        Benchmark(
            name="piecewise3",
            input_dim=1,
            output_dim=1,
            ranges=((0.0, 3.0),),
            error_metric="absolute",
            error_bound=0.1,
            approx_topology=_topo("1->3->1"),
            classifier_topology=_topo("1->16->2", "softmax"),
            fn=_piecewise3,
            target_scale=4.0,
        ),
    ]
    return {b.name: b for b in entries}


_CATALOG = _make_catalog()


def list_benchmarks() -> list[Benchmark]:
    return [_CATALOG[name] for name in sorted(_CATALOG)]


def get_benchmark(name: str) -> Benchmark:
    if name in UNSUPPORTED_BENCHMARKS:
        raise ValueError(f"benchmark {name!r} is unsupported: {UNSUPPORTED_BENCHMARKS[name]}")
    try:
        return _CATALOG[name]
    except KeyError:
        known = ", ".join(sorted(_CATALOG))
        raise ValueError(f"unknown benchmark {name!r} (known: {known})") from None


def customize(
    benchmark: Benchmark,
    error_bound: float | None = None,
    approx_topology: Topology | None = None,
    classifier_topology: Topology | None = None,
) -> Benchmark:
    """Catalog entry with selected fields overridden."""
    updates: dict = {}
    if error_bound is not None:
        updates["error_bound"] = float(error_bound)
    if approx_topology is not None:
        updates["approx_topology"] = approx_topology
    if classifier_topology is not None:
        updates["classifier_topology"] = classifier_topology
    return replace(benchmark, **updates) if updates else benchmark


# ---------------------------------------------------------------------------
# datasets


@dataclass
class Dataset:
    """Sampled inputs with their exact outputs and a train/test split."""

    benchmark_name: str
    inputs: np.ndarray  # (n, input_dim)
    outputs: np.ndarray  # (n, output_dim)
    train_indices: np.ndarray
    test_indices: np.ndarray
    generation_seed: int
    train_fraction: float

    @property
    def n_samples(self) -> int:
        return len(self.inputs)

    @property
    def train_inputs(self) -> np.ndarray:
        return self.inputs[self.train_indices]

    @property
    def train_outputs(self) -> np.ndarray:
        return self.outputs[self.train_indices]

    @property
    def test_inputs(self) -> np.ndarray:
        return self.inputs[self.test_indices]

    @property
    def test_outputs(self) -> np.ndarray:
        return self.outputs[self.test_indices]


def generate_dataset(
    benchmark: Benchmark,
    n_samples: int,
    seed: int,
    train_fraction: float = 2.0 / 3.0,
) -> Dataset:
    """Draw i.i.d. samples from the benchmark sampler; deterministic per seed.

    The train split takes ceil(train_fraction * n) samples of a seeded
    permutation; the test split takes the rest.
    """
    if n_samples < 10:
        raise ValueError("n_samples must be at least 10")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(int(seed))
    cols = []
    for i, (lo, hi) in enumerate(benchmark.ranges):
        if i in benchmark.integer_dims:
            cols.append(rng.integers(int(lo), int(hi) + 1, size=n_samples).astype(float))
        else:
            cols.append(rng.uniform(lo, hi, size=n_samples))
    inputs = np.column_stack(cols)
    outputs = evaluate_exact_batch(benchmark, inputs)
    perm = rng.permutation(n_samples)
    n_train = math.ceil(train_fraction * n_samples)
    return Dataset(
        benchmark_name=benchmark.name,
        inputs=inputs,
        outputs=outputs,
        train_indices=np.sort(perm[:n_train]),
        test_indices=np.sort(perm[n_train:]),
        generation_seed=int(seed),
        train_fraction=float(train_fraction),
    )


def save_dataset(dataset: Dataset, out_dir: str | Path) -> Path:
    """Write dataset.csv plus a dataset.meta.json sidecar; returns the dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    d = dataset.inputs.shape[1]
    m = dataset.outputs.shape[1]
    with open(out / "dataset.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(d)] + [f"y{j}" for j in range(m)])
        for x, y in zip(dataset.inputs, dataset.outputs):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in y])
    meta = {
        "format_version": DATASET_FORMAT_VERSION,
        "benchmark": dataset.benchmark_name,
        "n_samples": dataset.n_samples,
        "generation_seed": dataset.generation_seed,
        "train_fraction": dataset.train_fraction,
        "train_indices": [int(i) for i in dataset.train_indices],
        "test_indices": [int(i) for i in dataset.test_indices],
    }
    (out / "dataset.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_dataset(in_dir: str | Path) -> Dataset:
    """Read a dataset directory written by :func:`save_dataset`."""
    src = Path(in_dir)
    meta_path = src / "dataset.meta.json"
    csv_path = src / "dataset.csv"
    if not meta_path.exists() or not csv_path.exists():
        raise FileNotFoundError(f"no dataset at {src} (need dataset.csv and dataset.meta.json)")
    meta = json.loads(meta_path.read_text())
    if meta.get("format_version") != DATASET_FORMAT_VERSION:
        raise ValueError(f"{meta_path}: unsupported dataset format version")
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for c in header if c.startswith("x"))
        rows = [[float(v) for v in row] for row in reader]
    data = np.asarray(rows)
    return Dataset(
        benchmark_name=meta["benchmark"],
        inputs=data[:, :d],
        outputs=data[:, d:],
        train_indices=np.asarray(meta["train_indices"], dtype=int),
        test_indices=np.asarray(meta["test_indices"], dtype=int),
        generation_seed=int(meta["generation_seed"]),
        train_fraction=float(meta["train_fraction"]),
    )
