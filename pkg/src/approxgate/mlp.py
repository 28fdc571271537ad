"""Minimal feed-forward network engine.

Dense multilayer perceptrons with sigmoid hidden units, deterministic
seeded initialization, backpropagation, RMSprop (or plain SGD) training,
and a plain-text model file format that round-trips parameters exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HIDDEN_ACTIVATIONS = ("sigmoid",)
OUTPUT_ACTIVATIONS = ("linear", "sigmoid", "softmax")
LOSS_KINDS = ("mean_squared_error", "cross_entropy", "binary_cross_entropy")
OPTIMIZERS = ("rmsprop", "sgd")

MODEL_FORMAT_VERSION = 1
MODEL_MAGIC = "approxgate-model"


class TrainingDiverged(RuntimeError):
    """Raised when a non-finite loss or parameter shows up during training."""


@dataclass(frozen=True)
class Topology:
    """Layer sizes (input layer first) plus activation choices."""

    layer_sizes: tuple[int, ...]
    hidden_activation: str = "sigmoid"
    output_activation: str = "linear"

    def __post_init__(self) -> None:
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2:
            raise ValueError("topology needs at least an input and an output layer")
        if any(n < 1 for n in self.layer_sizes):
            raise ValueError(f"every layer size must be >= 1, got {self.layer_sizes}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        if self.output_activation == "softmax" and self.layer_sizes[-1] < 2:
            raise ValueError("softmax output requires at least 2 output units")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_weight_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def describe(self) -> str:
        """Arrow notation, e.g. ``6->8->1``."""
        return "->".join(str(n) for n in self.layer_sizes)

    @classmethod
    def from_string(
        cls,
        text: str,
        hidden_activation: str = "sigmoid",
        output_activation: str = "linear",
    ) -> "Topology":
        """Parse arrow notation like ``6->8->1`` into a topology."""
        try:
            sizes = tuple(int(part) for part in text.split("->"))
        except ValueError as exc:
            raise ValueError(f"cannot parse topology {text!r}") from exc
        return cls(sizes, hidden_activation, output_activation)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer settings. Defaults: 1500 epochs of RMSprop, batches of 32."""

    epochs: int = 1500
    optimizer: str = "rmsprop"
    learning_rate: float = 0.01
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.rmsprop_decay < 1.0:
            raise ValueError("rmsprop_decay must lie in (0, 1)")
        if self.rmsprop_epsilon <= 0:
            raise ValueError("rmsprop_epsilon must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")


@dataclass
class Mlp:
    """Network parameters: one (fan_in, fan_out) weight matrix and one bias
    vector per weight layer.  Immutable during inference; training mutates
    the instance in place and needs exclusive access."""

    topology: Topology
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    rng_seed: int

    def copy(self) -> "Mlp":
        return Mlp(
            self.topology,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.rng_seed,
        )

    def parameters_equal(self, other: "Mlp") -> bool:
        return (
            self.topology == other.topology
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


def init_mlp(topology: Topology, seed: int) -> Mlp:
    """Deterministic seeded initialization.

    Weights are drawn uniformly from +-sqrt(1/fan_in) per layer; biases
    start at zero.  Identical (topology, seed) pairs give bit-identical
    parameters.
    """
    rng = np.random.default_rng(int(seed))
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for fan_in, fan_out in zip(topology.layer_sizes, topology.layer_sizes[1:]):
        limit = math.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Mlp(topology, weights, biases, rng_seed=int(seed))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split at 0 so exp never overflows.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _forward_layers(mlp: Mlp, x: np.ndarray) -> list[np.ndarray]:
    """All post-activation values, input batch included, output last."""
    acts = [x]
    a = x
    last = mlp.topology.n_weight_layers - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ w + b
        if i < last:
            a = _sigmoid(z)
        elif mlp.topology.output_activation == "sigmoid":
            a = _sigmoid(z)
        elif mlp.topology.output_activation == "softmax":
            a = _softmax(z)
        else:
            a = z
        acts.append(a)
    return acts


def forward_batch(mlp: Mlp, inputs: np.ndarray) -> np.ndarray:
    """Forward pass over a (n, input_dim) batch; returns (n, output_dim)."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != mlp.topology.input_dim:
        raise ValueError(
            f"expected input shape (n, {mlp.topology.input_dim}), got {x.shape}"
        )
    if not np.isfinite(x).all():
        raise ValueError("inputs must be finite")
    return _forward_layers(mlp, x)[-1]


def forward(mlp: Mlp, input_vec: np.ndarray) -> np.ndarray:
    """Forward pass for a single input vector."""
    x = np.asarray(input_vec, dtype=float)
    if x.ndim != 1 or x.shape[0] != mlp.topology.input_dim:
        raise ValueError(
            f"expected input of length {mlp.topology.input_dim}, got shape {x.shape}"
        )
    return forward_batch(mlp, x[None, :])[0]


def _check_loss_pairing(topology: Topology, loss: str) -> None:
    if loss not in LOSS_KINDS:
        raise ValueError(f"unknown loss {loss!r}")
    out = topology.output_activation
    if loss == "cross_entropy" and out != "softmax":
        raise ValueError("cross_entropy requires a softmax output layer")
    if loss == "binary_cross_entropy" and (out != "sigmoid" or topology.output_dim != 1):
        raise ValueError("binary_cross_entropy requires a scalar sigmoid output")
    if loss == "mean_squared_error" and out == "softmax":
        raise ValueError("mean_squared_error does not pair with a softmax output")


def _loss_and_output_grad(
    mlp: Mlp, z_out: np.ndarray, out: np.ndarray, targets: np.ndarray,
    weights: np.ndarray, loss: str,
) -> tuple[float, np.ndarray]:
    """Batch loss (weighted mean of per-sample losses) and dL/dz_out."""
    wsum = weights.sum()
    scale = (weights / wsum)[:, None]
    if loss == "mean_squared_error":
        diff = out - targets
        per_sample = (diff * diff).mean(axis=1)
        dout = (2.0 / targets.shape[1]) * diff * scale
        if mlp.topology.output_activation == "sigmoid":
            dz = dout * out * (1.0 - out)
        else:
            dz = dout
    elif loss == "cross_entropy":
        zmax = z_out.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z_out - zmax).sum(axis=1))
        per_sample = lse - (targets * z_out).sum(axis=1)
        dz = (out - targets) * scale
    else:  # binary_cross_entropy
        z = z_out[:, 0]
        t = targets[:, 0]
        per_sample = _softplus(z) - t * z
        dz = (out[:, 0] - t)[:, None] * scale
    loss_val = float((weights * per_sample).sum() / wsum)
    return loss_val, dz


def _backprop(
    mlp: Mlp, x: np.ndarray, targets: np.ndarray, weights: np.ndarray, loss: str
) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Gradients of the weighted batch loss w.r.t. every parameter."""
    acts = [x]
    a = x
    last = mlp.topology.n_weight_layers - 1
    z_out = None
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = a @ w + b
        if i < last:
            a = _sigmoid(z)
        else:
            z_out = z
            if mlp.topology.output_activation == "sigmoid":
                a = _sigmoid(z)
            elif mlp.topology.output_activation == "softmax":
                a = _softmax(z)
            else:
                a = z
        acts.append(a)

    loss_val, dz = _loss_and_output_grad(mlp, z_out, acts[-1], targets, weights, loss)

    grads_w: list[np.ndarray] = [None] * len(mlp.weights)  # type: ignore[list-item]
    grads_b: list[np.ndarray] = [None] * len(mlp.biases)  # type: ignore[list-item]
    for i in range(last, -1, -1):
        grads_w[i] = acts[i].T @ dz
        grads_b[i] = dz.sum(axis=0)
        if i > 0:
            da = dz @ mlp.weights[i].T
            hidden = acts[i]
            dz = da * hidden * (1.0 - hidden)
    return grads_w, grads_b, loss_val


def evaluate_loss(
    mlp: Mlp,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss: str,
    sample_weights: np.ndarray | None = None,
) -> float:
    """Weighted mean loss over a dataset, without touching parameters."""
    x = np.asarray(inputs, dtype=float)
    t = np.asarray(targets, dtype=float)
    _check_loss_pairing(mlp.topology, loss)
    w = np.ones(len(x)) if sample_weights is None else np.asarray(sample_weights, float)
    acts = _forward_layers(mlp, x)
    # Recompute pre-activation of the output layer for the stable loss forms.
    z_out = acts[-2] @ mlp.weights[-1] + mlp.biases[-1]
    loss_val, _ = _loss_and_output_grad(mlp, z_out, acts[-1], t, w, loss)
    return loss_val


def train(
    mlp: Mlp,
    inputs: np.ndarray,
    targets: np.ndarray,
    loss: str,
    config: TrainConfig,
    sample_weights: np.ndarray | None = None,
) -> tuple[Mlp, float]:
    """Train in place with mini-batch RMSprop (or SGD); returns (mlp, final_loss).

    Deterministic given the starting parameters, the data order and
    ``config.seed`` (which drives the per-epoch shuffle).  ``final_loss``
    is the mean loss over the full training set after the last epoch.
    Optional ``sample_weights`` rescale each sample's contribution.
    """
    x = np.asarray(inputs, dtype=float)
    t = np.asarray(targets, dtype=float)
    if x.ndim != 2 or t.ndim != 2:
        raise ValueError("inputs and targets must be 2-d arrays")
    if len(x) == 0:
        raise ValueError("training set must not be empty")
    if len(x) != len(t):
        raise ValueError(f"inputs ({len(x)}) and targets ({len(t)}) differ in length")
    if x.shape[1] != mlp.topology.input_dim:
        raise ValueError(f"input dim {x.shape[1]} != topology input {mlp.topology.input_dim}")
    if t.shape[1] != mlp.topology.output_dim:
        raise ValueError(f"target dim {t.shape[1]} != topology output {mlp.topology.output_dim}")
    if not (np.isfinite(x).all() and np.isfinite(t).all()):
        raise ValueError("inputs and targets must be finite")
    _check_loss_pairing(mlp.topology, loss)
    if sample_weights is None:
        w = np.ones(len(x))
    else:
        w = np.asarray(sample_weights, dtype=float)
        if w.shape != (len(x),) or (w < 0).any() or w.sum() <= 0:
            raise ValueError("sample_weights must be nonnegative with a positive sum")

    rng = np.random.default_rng(int(config.seed))
    cache_w = [np.zeros_like(m) for m in mlp.weights]
    cache_b = [np.zeros_like(b) for b in mlp.biases]
    lr = config.learning_rate
    decay = config.rmsprop_decay
    eps = config.rmsprop_epsilon

    n = len(x)
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            gw, gb, batch_loss = _backprop(mlp, x[idx], t[idx], w[idx], loss)
            if not math.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            for i in range(len(mlp.weights)):
                if config.optimizer == "rmsprop":
                    cache_w[i] = decay * cache_w[i] + (1.0 - decay) * gw[i] ** 2
                    cache_b[i] = decay * cache_b[i] + (1.0 - decay) * gb[i] ** 2
                    mlp.weights[i] -= lr * gw[i] / (np.sqrt(cache_w[i]) + eps)
                    mlp.biases[i] -= lr * gb[i] / (np.sqrt(cache_b[i]) + eps)
                else:
                    mlp.weights[i] -= lr * gw[i]
                    mlp.biases[i] -= lr * gb[i]
        for i in range(len(mlp.weights)):
            if not (np.isfinite(mlp.weights[i]).all() and np.isfinite(mlp.biases[i]).all()):
                raise TrainingDiverged(f"non-finite parameters at epoch {epoch}")

    final_loss = evaluate_loss(mlp, x, t, loss, w)
    return mlp, final_loss


def predict_class(mlp: Mlp, input_vec: np.ndarray) -> tuple[int, float, np.ndarray]:
    """Class index, its probability, and the full distribution.

    Softmax outputs: argmax with ties broken toward the lowest index.
    Scalar sigmoid outputs: class 1 iff the output is >= 0.5, and the
    distribution is [1-p, p].
    """
    out = forward(mlp, input_vec)
    activation = mlp.topology.output_activation
    if activation == "softmax":
        idx = int(np.argmax(out))
        return idx, float(out[idx]), out
    if activation == "sigmoid" and mlp.topology.output_dim == 1:
        p = float(out[0])
        dist = np.array([1.0 - p, p])
        idx = 1 if p >= 0.5 else 0
        return idx, float(dist[idx]), dist
    raise ValueError("predict_class needs a softmax or scalar sigmoid output layer")


def _fmt(v: float) -> str:
    # 17 significant digits: lossless float64 round-trip.
    return format(float(v), ".17g")


def save_mlp(mlp: Mlp, path: str | Path) -> None:
    """Write the versioned plain-text model format (lossless round-trip)."""
    lines = [
        f"{MODEL_MAGIC} v{MODEL_FORMAT_VERSION}",
        f"topology {mlp.topology.describe()}",
        f"hidden_activation {mlp.topology.hidden_activation}",
        f"output_activation {mlp.topology.output_activation}",
        f"seed {mlp.rng_seed}",
    ]
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        lines.append(f"layer {i} weights {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(_fmt(v) for v in row))
        lines.append(f"layer {i} biases {b.shape[0]}")
        lines.append(" ".join(_fmt(v) for v in b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_mlp(path: str | Path) -> Mlp:
    """Read a model file written by :func:`save_mlp`."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith(MODEL_MAGIC):
        raise ValueError(f"{path}: not a model file")
    version = lines[0].split("v")[-1]
    if int(version) != MODEL_FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported model format version {version}")
    header = {}
    pos = 1
    for _ in range(4):
        key, _, value = lines[pos].partition(" ")
        header[key] = value
        pos += 1
    topology = Topology.from_string(
        header["topology"],
        hidden_activation=header["hidden_activation"],
        output_activation=header["output_activation"],
    )
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for i, (fan_in, fan_out) in enumerate(zip(topology.layer_sizes, topology.layer_sizes[1:])):
        expect = f"layer {i} weights {fan_in} {fan_out}"
        if lines[pos] != expect:
            raise ValueError(f"{path}: expected {expect!r}, got {lines[pos]!r}")
        pos += 1
        rows = [np.array([float(v) for v in lines[pos + r].split()]) for r in range(fan_in)]
        pos += fan_in
        w = np.vstack(rows)
        if w.shape != (fan_in, fan_out):
            raise ValueError(f"{path}: bad weight block for layer {i}")
        weights.append(w)
        expect = f"layer {i} biases {fan_out}"
        if lines[pos] != expect:
            raise ValueError(f"{path}: expected {expect!r}, got {lines[pos]!r}")
        pos += 1
        b = np.array([float(v) for v in lines[pos].split()])
        if b.shape != (fan_out,):
            raise ValueError(f"{path}: bad bias block for layer {i}")
        pos += 1
        biases.append(b)
    return Mlp(topology, weights, biases, rng_seed=int(header["seed"]))
