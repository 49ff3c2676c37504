"""Training loop for regularization-learning networks and their baselines.

Weights follow SGD on the per-weight regularized loss. After every weight
step the empirical gradient on the *next* batch, taken at the freshly updated
weights, drives the log-space coefficients::

    lambda_i <- lambda_i + nu * eta * g_next_i * r_i

where ``r_i`` is the penalty gradient that was actually applied to ``w_i``.
The coefficients are then shifted back to mean ``theta``. The same ``g_next``
is the empirical gradient of the following weight step, so every batch costs
one backward pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, DataError, NumericError, SequencingError
from .network import Batch, GradientSet, LayerSpec, Network, backward, forward, init_network, mse_loss
from .regularizer import NORMS, RegCoefficients, project, reg_gradient

MODES = ("rln", "dnn_uniform", "linear")
WEIGHT_UPDATES = ("subgradient", "proximal")


@dataclass(frozen=True)
class TrainConfig:
    eta: float = 1e-2
    nu: float = 1e4
    theta: float = -6.0
    epochs: int = 100
    batch_size: int = 32
    norm: str = "l1"
    mode: str = "rln"
    # None picks proximal for l1 and subgradient for l2
    weight_update: str | None = None
    seed: int = 0
    sparsity_epsilon: float = 0.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.norm not in NORMS:
            raise ConfigurationError(f"unknown norm {self.norm!r}")
        if self.weight_update is None:
            object.__setattr__(self, "weight_update", "proximal" if self.norm == "l1" else "subgradient")
        if self.weight_update not in WEIGHT_UPDATES:
            raise ConfigurationError(f"unknown weight update rule {self.weight_update!r}")
        if self.weight_update == "proximal" and self.norm != "l1":
            raise ConfigurationError("the proximal update is only defined for the l1 norm")
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ConfigurationError(f"eta must be a positive finite number, got {self.eta}")
        if not (math.isfinite(self.nu) and self.nu >= 0):
            raise ConfigurationError(f"nu must be a nonnegative finite number, got {self.nu}")
        if not math.isfinite(self.theta):
            raise ConfigurationError("theta must be finite")
        if int(self.epochs) < 0 or int(self.batch_size) < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.sparsity_epsilon < 0:
            raise ConfigurationError("sparsity_epsilon must be nonnegative")

    @property
    def learns_lambda(self) -> bool:
        # rln runs the coefficient update even at nu == 0 (it is then an exact no-op)
        return self.mode == "rln"


@dataclass
class TrainerState:
    net: Network
    coeffs: RegCoefficients
    pending_r: list[np.ndarray] | None = None
    step_index: int = 0


@dataclass
class TrainRecord:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    zero_fraction: list[list[float]] = field(default_factory=list)
    edge_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    # epochs x tracked edges
    edge_w: list[np.ndarray] = field(default_factory=list)
    edge_lambda: list[np.ndarray] = field(default_factory=list)

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)


def weight_step(
    state: TrainerState, batch: Batch, config: TrainConfig, grads: GradientSet | None = None
) -> TrainerState:
    """One SGD step on the regularized loss; updates ``state`` in place and returns it.

    ``grads`` may carry a precomputed empirical gradient for ``batch`` at the
    current weights; otherwise it is computed here. The penalty gradient that
    was effectively applied is kept in ``state.pending_r``.
    """
    if grads is None:
        _, grads = backward(state.net, batch)
    eta = config.eta
    net, coeffs = state.net, state.coeffs
    # overflow is reported below as a NumericError rather than as a warning
    with np.errstate(over="ignore", invalid="ignore"):
        applied = []
        if config.weight_update == "proximal":
            for k, (w, g, lam) in enumerate(zip(net.weights, grads.weights, coeffs.lambdas)):
                shifted = w - eta * g
                # exp overflow gives an infinite threshold, which correctly clamps to zero
                threshold = eta * np.exp(lam)
                new_w = np.sign(shifted) * np.maximum(np.abs(shifted) - threshold, 0.0)
                applied.append((shifted - new_w) / eta)
                net.weights[k] = new_w
        else:
            r = reg_gradient(net, coeffs)
            for k, (g, rk) in enumerate(zip(grads.weights, r)):
                net.weights[k] = net.weights[k] - eta * (g + rk)
                applied.append(rk)
        for k, gb in enumerate(grads.biases):
            net.biases[k] = net.biases[k] - eta * gb
    for k, (w, b) in enumerate(zip(net.weights, net.biases)):
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NumericError("non-finite weight update", layer=k, step=state.step_index)
    state.pending_r = applied
    state.step_index += 1
    return state


def counterfactual_gradient(g_next, r, eta):
    """Derivative of the next-batch loss with respect to a log coefficient."""
    return -eta * g_next * r


def lambda_step(state: TrainerState, g_next: GradientSet, config: TrainConfig) -> TrainerState:
    """Move every coefficient against its counterfactual gradient, then re-centre on theta."""
    if state.pending_r is None:
        raise SequencingError("lambda_step requires a preceding weight_step")
    coeffs = state.coeffs
    moved = [
        lam - config.nu * counterfactual_gradient(g, r, config.eta)
        for lam, g, r in zip(coeffs.lambdas, g_next.weights, state.pending_r)
    ]
    state.coeffs = project(RegCoefficients(moved, coeffs.norm, coeffs.theta))
    state.pending_r = None
    if not all(np.all(np.isfinite(lam)) for lam in state.coeffs.lambdas):
        raise NumericError("non-finite regularization coefficient", step=state.step_index)
    return state


def zero_fractions(net: Network, epsilon: float = 0.0) -> list[float]:
    return [float(np.mean(np.abs(w) <= epsilon)) for w in net.weights]


def linear_specs(n_features: int) -> list[LayerSpec]:
    return [LayerSpec(n_features, 1, "identity")]


def _batch_stream(n: int, batch_size: int, epochs: int, rng: np.random.Generator):
    for epoch in range(epochs):
        order = rng.permutation(n)
        n_batches = -(-n // batch_size)
        for j in range(n_batches):
            yield epoch, j == n_batches - 1, order[j * batch_size:(j + 1) * batch_size]


def _pick_edges(n_edges: int, track) -> np.ndarray:
    if track is None or track == 0:
        return np.zeros(0, dtype=int)
    if track == "all" or int(track) >= n_edges:
        return np.arange(n_edges)
    return np.unique(np.linspace(0, n_edges - 1, int(track)).round().astype(int))


def train(
    dataset,
    arch: Sequence[LayerSpec] | None,
    config: TrainConfig,
    *,
    track_edges=None,
) -> tuple[Network, RegCoefficients, TrainRecord]:
    """Fit a network on the training split of ``dataset``.

    ``track_edges`` selects first-layer edges whose ``(w, lambda)`` values are
    recorded after every epoch: ``None``, an edge count, or ``"all"``.
    """
    x_train, y_train = dataset.subset("train")
    if x_train.shape[0] == 0:
        raise DataError("dataset has no training samples")
    x_val, y_val = dataset.subset("validation")
    n, d = x_train.shape

    if config.mode == "linear":
        if arch is None:
            arch = linear_specs(d)
        if len(arch) != 1:
            raise ConfigurationError("linear mode needs a single identity layer")
        if config.norm != "l2" or config.nu != 0:
            config = replace(config, norm="l2", weight_update="subgradient", nu=0.0)
    if arch is None:
        raise ConfigurationError("an architecture is required for network modes")
    arch = list(arch)
    if arch[0].input_width != d:
        raise ConfigurationError(f"architecture expects {arch[0].input_width} inputs, data has {d}")

    init_seq, shuffle_seq = np.random.SeedSequence(config.seed).spawn(2)
    net = init_network(arch, int(init_seq.generate_state(1)[0]))
    coeffs = RegCoefficients.constant(net, config.theta, config.norm)
    state = TrainerState(net, coeffs)
    record = TrainRecord(edge_ids=_pick_edges(net.weights[0].size, track_edges))
    if config.epochs == 0:
        return net, coeffs, record

    rng = np.random.default_rng(shuffle_seq)
    stream = _batch_stream(n, int(config.batch_size), int(config.epochs), rng)
    learn = config.learns_lambda

    epoch, end_of_epoch, idx = next(stream)
    batch = Batch(x_train[idx], y_train[idx])
    try:
        _, grads = backward(state.net, batch)
    except NumericError as exc:
        raise NumericError("training diverged", layer=exc.layer, step=0, epoch=0) from exc
    while True:
        try:
            weight_step(state, batch, config, grads)
        except NumericError as exc:
            raise NumericError("training diverged", layer=exc.layer, step=exc.step, epoch=epoch) from exc
        if end_of_epoch:
            _record_epoch(record, state, config, x_train, y_train, x_val, y_val)
        following = next(stream, None)
        if following is None:
            break
        epoch, end_of_epoch, idx = following
        batch = Batch(x_train[idx], y_train[idx])
        try:
            _, grads = backward(state.net, batch)
            if learn:
                lambda_step(state, grads, config)
        except NumericError as exc:
            raise NumericError(
                "training diverged", layer=exc.layer, step=state.step_index, epoch=epoch
            ) from exc
        state.pending_r = None
    return state.net, state.coeffs, record


def _record_epoch(record, state, config, x_train, y_train, x_val, y_val):
    net = state.net
    record.train_loss.append(mse_loss(forward(net, x_train), y_train))
    if x_val.shape[0]:
        record.val_loss.append(mse_loss(forward(net, x_val), y_val))
    record.zero_fraction.append(zero_fractions(net, config.sparsity_epsilon))
    if record.edge_ids.size:
        record.edge_w.append(net.weights[0].ravel()[record.edge_ids].copy())
        record.edge_lambda.append(state.coeffs.lambdas[0].ravel()[record.edge_ids].copy())


@dataclass
class LinearModel:
    coef: np.ndarray
    intercept: float
    net: Network
    coeffs: RegCoefficients
    record: TrainRecord

    def predict(self, inputs) -> np.ndarray:
        return forward(self.net, inputs)


def train_linear(dataset, config: TrainConfig) -> LinearModel:
    """Ridge regression fitted with the same SGD loop (single identity layer, uniform l2)."""
    config = replace(config, mode="linear", norm="l2", weight_update="subgradient", nu=0.0)
    net, coeffs, record = train(dataset, None, config)
    return LinearModel(net.weights[0][0].copy(), float(net.biases[0][0]), net, coeffs, record)
