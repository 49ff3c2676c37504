"""Feature importance and sparsity diagnostics for trained networks."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigurationError, DataError
from .network import Network


def garson_importance(net: Network) -> np.ndarray:
    """Garson importance generalized to any depth.

    Each layer's absolute weights are normalized per receiving unit (a unit
    with no incoming weight passes nothing on); the resulting matrices are
    chained from the inputs to the single output. Returns a vector that sums
    to 1, or all zeros when no path carries weight.
    """
    if net.specs[-1].output_width != 1:
        raise ConfigurationError("Garson importance needs a single-output network")
    chain = np.eye(net.input_width)
    for w in net.weights:
        a = np.abs(w)
        totals = a.sum(axis=1, keepdims=True)
        a = np.divide(a, totals, out=np.zeros_like(a), where=totals > 0)
        chain = a @ chain
    imp = chain[0]
    total = imp.sum()
    return imp / total if total > 0 else np.zeros_like(imp)


def importance_entropy(importance) -> float:
    """Shannon entropy in bits, with ``0 log 0 = 0``."""
    p = np.asarray(importance, dtype=np.float64)
    if np.any(p < 0):
        raise DataError("importances must be nonnegative")
    if not np.any(p > 0):
        raise DataError("entropy is undefined for an all-zero importance vector")
    p = p / p.sum()
    nz = p[p > 0]
    return float(-np.sum(nz * np.log2(nz)))


def _kl2(p: np.ndarray, q: np.ndarray) -> float:
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in bits; lies in [0, 1]."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DataError(f"length mismatch: {p.shape} vs {q.shape}")
    m = 0.5 * (p + q)
    js = 0.5 * _kl2(p, m) + 0.5 * _kl2(q, m)
    return float(min(max(js, 0.0), 1.0))


def mean_pairwise_js(vectors) -> float:
    """Average divergence over all unordered pairs of importance vectors."""
    vectors = list(vectors)
    if len(vectors) < 2:
        raise DataError("need at least two importance vectors")
    return float(np.mean([js_divergence(a, b) for a, b in combinations(vectors, 2)]))


@dataclass
class SparsityReport:
    layer_zero_fraction: list[float]
    network_zero_fraction: float
    eliminated_features: int
    eliminated_fraction: float
    epsilon: float

    def summary(self) -> str:
        lines = [f"epsilon: {self.epsilon!r}"]
        for k, f in enumerate(self.layer_zero_fraction):
            lines.append(f"layer {k} zero fraction: {f:.6f}")
        lines.append(f"network zero fraction: {self.network_zero_fraction:.6f}")
        lines.append(
            f"eliminated input features: {self.eliminated_features} ({self.eliminated_fraction:.6f})"
        )
        return "\n".join(lines)


def sparsity_report(net: Network, epsilon: float = 0.0) -> SparsityReport:
    """Weights with ``|w| <= epsilon`` count as zero; an input is eliminated when all its
    first-layer outgoing weights are zero."""
    if epsilon < 0:
        raise ConfigurationError("epsilon must be nonnegative")
    zero = [np.abs(w) <= epsilon for w in net.weights]
    per_layer = [float(z.mean()) for z in zero]
    n_zero = sum(int(z.sum()) for z in zero)
    eliminated = int(np.all(zero[0], axis=0).sum())
    return SparsityReport(
        layer_zero_fraction=per_layer,
        network_zero_fraction=n_zero / net.n_weights,
        eliminated_features=eliminated,
        eliminated_fraction=eliminated / net.input_width,
        epsilon=float(epsilon),
    )
