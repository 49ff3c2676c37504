"""Model documents and training-record CSV exports.

A model is stored as one JSON document. Python's float repr is the shortest
string that parses back to the same double, so every weight, bias and
coefficient round-trips bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Scaler
from .errors import DataError
from .network import LayerSpec, Network, forward
from .regularizer import RegCoefficients
from .trainer import TrainConfig, TrainRecord

FORMAT = "reglearn-model"
FORMAT_VERSION = 1


@dataclass
class TrainedModel:
    net: Network
    config: TrainConfig
    coeffs: RegCoefficients | None = None
    scaler: Scaler | None = None
    feature_names: list[str] | None = None
    target_name: str = "y"

    def predict(self, inputs) -> np.ndarray:
        """Predictions for inputs that are already standardized."""
        return forward(self.net, inputs)

    def predict_raw(self, features) -> np.ndarray:
        """Predictions for unscaled features, applying the stored scaler first."""
        x = np.asarray(features, dtype=np.float64)
        if self.scaler is not None:
            x = self.scaler.transform(x)
        return forward(self.net, x)


def _matrix(rows, shape) -> np.ndarray:
    a = np.asarray(rows, dtype=np.float64)
    if a.shape != tuple(shape):
        raise DataError(f"array of shape {a.shape} where {tuple(shape)} was declared")
    return a


def model_to_dict(model: TrainedModel) -> dict:
    net = model.net
    doc = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "layers": [asdict(s) for s in net.specs],
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "config": asdict(model.config),
        "seed": model.config.seed,
        "target_name": model.target_name,
        "feature_names": model.feature_names,
        "scaler": model.scaler.to_dict() if model.scaler is not None else None,
        "regularization": None,
    }
    if model.coeffs is not None:
        doc["regularization"] = {
            "norm": model.coeffs.norm,
            "theta": model.coeffs.theta,
            "lambdas": [lam.tolist() for lam in model.coeffs.lambdas],
        }
    return doc


def model_from_dict(doc: dict) -> TrainedModel:
    if doc.get("format") != FORMAT:
        raise DataError("not a reglearn model document")
    if doc.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported model format version {doc.get('format_version')!r}")
    try:
        specs = [LayerSpec(**s) for s in doc["layers"]]
        weights = [_matrix(w, (s.output_width, s.input_width)) for w, s in zip(doc["weights"], specs)]
        biases = [_matrix(b, (s.output_width,)) for b, s in zip(doc["biases"], specs)]
        net = Network(specs, weights, biases)
        config = TrainConfig(**doc["config"])
        coeffs = None
        reg = doc.get("regularization")
        if reg is not None:
            lambdas = [_matrix(lam, w.shape) for lam, w in zip(reg["lambdas"], weights)]
            coeffs = RegCoefficients(lambdas, reg["norm"], reg["theta"])
        scaler = Scaler.from_dict(doc["scaler"]) if doc.get("scaler") else None
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed model document: {exc}") from None
    return TrainedModel(net, config, coeffs, scaler, doc.get("feature_names"), doc.get("target_name", "y"))


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")
    return path


def load_model(path) -> TrainedModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such model file: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from None
    return model_from_dict(doc)


def write_record_csv(record: TrainRecord, path) -> Path:
    path = Path(path)
    n_layers = len(record.zero_fraction[0]) if record.zero_fraction else 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", *[f"zero_fraction_layer_{k}" for k in range(n_layers)]])
        for e in range(record.n_epochs):
            val = repr(record.val_loss[e]) if e < len(record.val_loss) else ""
            w.writerow([e + 1, repr(record.train_loss[e]), val, *map(repr, record.zero_fraction[e])])
    return path


def write_trajectory_csv(record: TrainRecord, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge_id", "epoch", "w", "lambda"])
        for j, edge in enumerate(record.edge_ids):
            for e, (ws, ls) in enumerate(zip(record.edge_w, record.edge_lambda)):
                w.writerow([int(edge), e + 1, repr(float(ws[j])), repr(float(ls[j]))])
    return path
