"""Per-weight regularization coefficients kept in log space.

Each weight ``w_i`` carries its own ``lambda_i`` and contributes
``exp(lambda_i) * ||w_i||`` to the penalty, with ``||w|| = |w|`` (l1) or
``w**2`` (l2). Biases are never penalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .network import Network

NORMS = ("l1", "l2")


@dataclass
class RegCoefficients:
    lambdas: list[np.ndarray]
    norm: str = "l1"
    theta: float = -6.0

    def __post_init__(self):
        if self.norm not in NORMS:
            raise ConfigurationError(f"unknown norm {self.norm!r}")
        self.theta = float(self.theta)

    @classmethod
    def constant(cls, net: Network, theta: float, norm: str = "l1") -> "RegCoefficients":
        """All coefficients equal to ``theta``, shaped like ``net``'s weights."""
        return cls([np.full(w.shape, float(theta)) for w in net.weights], norm, theta)

    @property
    def size(self) -> int:
        return sum(lam.size for lam in self.lambdas)

    def flat(self) -> np.ndarray:
        return np.concatenate([lam.ravel() for lam in self.lambdas])

    def mean(self) -> float:
        return float(self.flat().mean())

    def copy(self) -> "RegCoefficients":
        return RegCoefficients([lam.copy() for lam in self.lambdas], self.norm, self.theta)


def _check(net: Network, coeffs: RegCoefficients) -> None:
    if len(net.weights) != len(coeffs.lambdas) or any(
        w.shape != lam.shape for w, lam in zip(net.weights, coeffs.lambdas)
    ):
        raise ConfigurationError("regularization coefficients do not match the network's weights")


def reg_term(net: Network, coeffs: RegCoefficients) -> float:
    _check(net, coeffs)
    total = 0.0
    for w, lam in zip(net.weights, coeffs.lambdas):
        size = np.abs(w) if coeffs.norm == "l1" else w * w
        total += float(np.sum(np.exp(lam) * size))
    return total


def reg_gradient(net: Network, coeffs: RegCoefficients) -> list[np.ndarray]:
    """Gradient of the penalty with respect to each weight.

    l1 uses ``sign(w)`` with a zero subgradient at ``w == 0``.
    """
    _check(net, coeffs)
    if coeffs.norm == "l1":
        return [np.exp(lam) * np.sign(w) for w, lam in zip(net.weights, coeffs.lambdas)]
    return [np.exp(lam) * 2.0 * w for w, lam in zip(net.weights, coeffs.lambdas)]


def project(coeffs: RegCoefficients) -> RegCoefficients:
    """Shift every coefficient by one shared constant so their mean equals ``theta``.

    The shift is computed from deviations around ``theta`` so that an
    already-centred set of equal values is returned unchanged bit for bit.
    """
    theta = coeffs.theta
    total = sum(float(np.sum(lam - theta)) for lam in coeffs.lambdas)
    shift = -total / coeffs.size
    return RegCoefficients([lam + shift for lam in coeffs.lambdas], coeffs.norm, theta)
