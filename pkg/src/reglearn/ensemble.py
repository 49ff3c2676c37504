"""Unweighted prediction ensembles and regression metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import DataError


@dataclass
class ModelSet:
    """Trained predictors plus optional precomputed prediction columns.

    A member is anything with a ``predict(inputs)`` method or a plain
    callable. External columns are fixed vectors (for example predictions
    written by a gradient-boosting library) and only fit inputs of their
    own length.
    """

    members: list[Any] = field(default_factory=list)
    external: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.members) + len(self.external)

    def predictions(self, inputs) -> np.ndarray:
        """Member-by-sample prediction matrix."""
        if len(self) == 0:
            raise DataError("an ensemble needs at least one member")
        x = np.asarray(inputs, dtype=np.float64)
        rows = []
        for member in self.members:
            fn = member.predict if hasattr(member, "predict") else member
            rows.append(np.asarray(fn(x), dtype=np.float64).reshape(-1))
        m = x.shape[0]
        for col in self.external:
            if col.shape[0] != m:
                raise DataError(f"external prediction column has {col.shape[0]} rows, inputs have {m}")
            rows.append(col)
        return np.vstack(rows)


def ensemble_predict(ms: ModelSet, inputs) -> np.ndarray:
    return ms.predictions(inputs).mean(axis=0)


def prediction_variance(ms: ModelSet, inputs) -> float:
    """Across-member population variance, averaged over samples."""
    if len(ms) < 2:
        raise DataError("prediction variance needs at least two members")
    p = ms.predictions(inputs)
    # shifting by one member leaves the variance unchanged and makes agreeing members exactly 0
    return float((p - p[0]).var(axis=0).mean())


def r2_score(pred, targets) -> float:
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise DataError(f"length mismatch: {p.size} vs {y.size}")
    if y.size < 2:
        raise DataError("R^2 needs at least two samples")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise DataError("R^2 is undefined for constant targets")
    return 1.0 - float(np.sum((y - p) ** 2)) / ss_tot


def load_external_predictions(path, m: int) -> np.ndarray:
    """One number per non-blank line; the count must equal ``m``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    values = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise DataError(f"{path}:{i}: non-numeric prediction {line!r}") from None
    col = np.asarray(values, dtype=np.float64)
    if col.size != m:
        raise DataError(f"{path} holds {col.size} predictions, expected {m}")
    if not np.all(np.isfinite(col)):
        raise DataError(f"{path} contains non-finite predictions")
    return col


def select_top(candidates, scores, k: int = 10) -> list:
    """The ``k`` candidates with the highest validation score (stable on ties)."""
    order = sorted(range(len(candidates)), key=lambda i: -scores[i])
    return [candidates[i] for i in order[:k]]
