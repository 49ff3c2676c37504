"""Dense feedforward regression networks with exact backpropagation.

Weights are stored as ``(output_width, input_width)`` matrices so that a layer
computes ``activation(x @ W.T + b)`` on a row-major batch ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError, NumericError

ACTIVATIONS = ("relu", "leaky_relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    input_width: int
    output_width: int
    activation: str = "relu"
    slope: float = 0.01  # only used by leaky_relu

    def __post_init__(self):
        if int(self.input_width) < 1 or int(self.output_width) < 1:
            raise ConfigurationError(
                f"layer widths must be >= 1, got {self.input_width}->{self.output_width}"
            )
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.activation == "leaky_relu" and not 0.0 < self.slope < 1.0:
            raise ConfigurationError(f"leaky_relu slope must be in (0, 1), got {self.slope}")


def mlp_specs(input_width: int, hidden: Sequence[int], activation: str = "relu") -> list[LayerSpec]:
    """Specs for ``input_width-hidden...-1`` with an identity output layer."""
    widths = [int(input_width), *map(int, hidden), 1]
    specs = [LayerSpec(a, b, activation) for a, b in zip(widths[:-2], widths[1:-1])]
    specs.append(LayerSpec(widths[-2], 1, "identity"))
    return specs


@dataclass
class Network:
    specs: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.specs = tuple(self.specs)
        check_chain(self.specs)
        if len(self.weights) != len(self.specs) or len(self.biases) != len(self.specs):
            raise ConfigurationError("one weight matrix and bias vector per layer required")
        for k, (spec, w, b) in enumerate(zip(self.specs, self.weights, self.biases)):
            if w.shape != (spec.output_width, spec.input_width) or b.shape != (spec.output_width,):
                raise ConfigurationError(f"layer {k} arrays do not match its LayerSpec")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericError("non-finite parameter", layer=k)

    @property
    def input_width(self) -> int:
        return self.specs[0].input_width

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    def copy(self) -> "Network":
        return Network(self.specs, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def predict(self, inputs) -> np.ndarray:
        return forward(self, inputs)


@dataclass
class GradientSet:
    weights: list[np.ndarray]
    biases: list[np.ndarray] = field(default_factory=list)


@dataclass
class Batch:
    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if self.inputs.ndim != 2 or self.inputs.shape[0] < 1:
            raise DataError("batch inputs must be a non-empty 2-D array")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise DataError("batch inputs and targets differ in length")


def check_chain(specs: Sequence[LayerSpec]) -> None:
    if not specs:
        raise ConfigurationError("a network needs at least one layer")
    for k in range(len(specs) - 1):
        if specs[k].output_width != specs[k + 1].input_width:
            raise ConfigurationError(
                f"layer {k} outputs {specs[k].output_width} units but layer {k + 1} "
                f"expects {specs[k + 1].input_width}"
            )
    if specs[-1].output_width != 1 or specs[-1].activation != "identity":
        raise ConfigurationError("the final layer must be a single identity-activated unit")


def init_network(specs: Sequence[LayerSpec], seed: int) -> Network:
    """He-normal weights for rectifier layers, Glorot-uniform for identity layers, zero biases."""
    specs = tuple(specs)
    check_chain(specs)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        shape = (spec.output_width, spec.input_width)
        if spec.activation == "identity":
            limit = np.sqrt(6.0 / (spec.input_width + spec.output_width))
            weights.append(rng.uniform(-limit, limit, size=shape))
        else:
            weights.append(rng.normal(0.0, np.sqrt(2.0 / spec.input_width), size=shape))
        biases.append(np.zeros(spec.output_width))
    return Network(specs, weights, biases)


def _activate(spec: LayerSpec, z: np.ndarray) -> np.ndarray:
    if spec.activation == "relu":
        return np.maximum(z, 0.0)
    if spec.activation == "leaky_relu":
        return np.where(z > 0.0, z, spec.slope * z)
    return z


def _activation_grad(spec: LayerSpec, z: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0 (relu) / slope (leaky_relu)
    if spec.activation == "relu":
        return (z > 0.0).astype(np.float64)
    if spec.activation == "leaky_relu":
        return np.where(z > 0.0, 1.0, spec.slope)
    return np.ones_like(z)


def _as_inputs(net: Network, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != net.input_width:
        raise DataError(f"expected inputs with {net.input_width} columns, got shape {x.shape}")
    return x


def _forward_trace(net: Network, x: np.ndarray):
    pre, post = [], [x]
    a = x
    for spec, w, b in zip(net.specs, net.weights, net.biases):
        # overflow surfaces as inf/nan and is reported by the callers that check finiteness
        with np.errstate(over="ignore", invalid="ignore"):
            z = a @ w.T + b
        a = _activate(spec, z)
        pre.append(z)
        post.append(a)
    return pre, post


def forward(net: Network, inputs) -> np.ndarray:
    """Predictions for an ``m x d`` input matrix, as an ``m``-vector."""
    x = _as_inputs(net, inputs)
    _, post = _forward_trace(net, x)
    return post[-1][:, 0]


def mse_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64).reshape(-1)
    t = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != t.shape:
        raise DataError(f"prediction/target length mismatch: {p.size} vs {t.size}")
    r = p - t
    return float(np.dot(r, r) / r.size)


def backward(net: Network, batch: Batch) -> tuple[float, GradientSet]:
    """MSE loss on ``batch`` and its exact gradient with respect to every weight and bias."""
    x = _as_inputs(net, batch.inputs)
    if x.shape[0] != batch.targets.shape[0]:
        raise DataError("batch inputs and targets differ in length")
    pre, post = _forward_trace(net, x)
    m = x.shape[0]
    for k, z in enumerate(pre):
        if not np.all(np.isfinite(z)):
            raise NumericError("non-finite pre-activation", layer=k)
    # overflow is reported as a NumericError below rather than as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        residual = post[-1][:, 0] - batch.targets
        loss = float(np.dot(residual, residual) / m)

        n_layers = len(net.specs)
        grad_w: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        grad_b: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        delta = (2.0 / m) * residual[:, None]
        for k in range(n_layers - 1, -1, -1):
            delta = delta * _activation_grad(net.specs[k], pre[k])
            grad_w[k] = delta.T @ post[k]
            grad_b[k] = delta.sum(axis=0)
            if not (np.all(np.isfinite(grad_w[k])) and np.all(np.isfinite(grad_b[k]))):
                raise NumericError("non-finite gradient", layer=k)
            if k:
                delta = delta @ net.weights[k]
    return loss, GradientSet(grad_w, grad_b)
