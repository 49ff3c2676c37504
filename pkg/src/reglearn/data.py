"""Tabular datasets: CSV ingestion, standardization, splitting and a synthetic generator."""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

SPLITS = ("train", "validation", "test")


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: list[str]
    split: np.ndarray | None = None
    target_name: str = "y"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        self.feature_names = [str(n) for n in self.feature_names]
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D array")
        m, d = self.features.shape
        if m < 1:
            raise DataError("a dataset needs at least one sample")
        if self.targets.shape[0] != m:
            raise DataError("features and targets differ in length")
        if len(self.feature_names) != d:
            raise DataError("one name per feature column required")
        if len(set(self.feature_names)) != d:
            raise DataError("feature names must be unique")
        if not (np.all(np.isfinite(self.features)) and np.all(np.isfinite(self.targets))):
            raise DataError("dataset contains missing or non-finite values")
        if self.split is None:
            self.split = np.full(m, "train", dtype=object)
        else:
            self.split = np.asarray(self.split, dtype=object)
            if self.split.shape != (m,) or not set(self.split) <= set(SPLITS):
                raise DataError("split tags must be one of train/validation/test per sample")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def mask(self, *tags: str) -> np.ndarray:
        return np.isin(self.split, tags)

    def subset(self, *tags: str) -> tuple[np.ndarray, np.ndarray]:
        keep = self.mask(*tags)
        return self.features[keep], self.targets[keep]

    def counts(self) -> dict[str, int]:
        return {tag: int(np.sum(self.split == tag)) for tag in SPLITS}

    def with_split(self, split) -> "Dataset":
        return replace(self, split=np.asarray(split, dtype=object))

    def merged(self, *tags: str, into: str = "train") -> "Dataset":
        """Copy with every sample tagged in ``tags`` re-tagged as ``into``."""
        split = self.split.copy()
        split[self.mask(*tags)] = into
        return self.with_split(split)


def load_csv(path, target_column: str, missing_policy: str = "reject_row") -> Dataset:
    """Read a comma-separated numeric table with a mandatory header row.

    Empty cells either drop their row (``reject_row``) or are replaced by the
    column mean (``mean_impute``). Row order is preserved.
    """
    if missing_policy not in ("reject_row", "mean_impute"):
        raise ConfigurationError(f"unknown missing-value policy {missing_policy!r}")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if target_column not in header:
        raise DataError(f"target column {target_column!r} not found in {path}")
    body = rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")

    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} cells, found {len(row)}")
        for j, cell in enumerate(row):
            cell = cell.strip()
            if cell == "":
                values[i - 2, j] = np.nan
                continue
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}:{i}: non-numeric value {cell!r} in column {header[j]!r}") from None
    if not np.all(np.isfinite(values[~np.isnan(values)])):
        raise DataError(f"{path} contains infinite values")

    t = header.index(target_column)
    target = values[:, t]
    features = np.delete(values, t, axis=1)
    names = header[:t] + header[t + 1:]
    keep = ~np.isnan(target)
    if missing_policy == "reject_row":
        keep &= ~np.isnan(features).any(axis=1)
    features, target = features[keep], target[keep]
    if features.shape[0] == 0:
        raise DataError(f"{path}: no complete rows left")
    if missing_policy == "mean_impute":
        holes = np.isnan(features)
        if holes.all(axis=0).any():
            raise DataError(f"{path}: a feature column has no values to impute from")
        means = np.nanmean(features, axis=0)
        features = np.where(holes, means, features)
    return Dataset(features, target, names, target_name=target_column)


def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, ds.target_name])
        for x, y in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.mean.size:
            raise DataError(f"expected {self.mean.size} feature columns, got shape {x.shape}")
        return (x - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64))


def standardize(ds: Dataset) -> tuple[Dataset, Scaler]:
    """Centre and scale every feature with training-split statistics.

    Constant training columns get std 1, which maps them to zeros.
    """
    x_train, _ = ds.subset("train")
    if x_train.shape[0] == 0:
        raise DataError("standardize needs a nonempty training split")
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 1.0)
    scaler = Scaler(mean, std)
    return replace(ds, features=scaler.transform(ds.features)), scaler


def check_fractions(fractions) -> np.ndarray:
    fr = np.asarray(fractions, dtype=np.float64)
    if fr.shape != (3,) or not np.all(np.isfinite(fr)) or np.any(fr < 0):
        raise ConfigurationError(f"split fractions must be three nonnegative numbers, got {fractions}")
    if abs(fr.sum() - 1.0) > 1e-9:
        raise ConfigurationError(f"split fractions must sum to 1, got {fr.sum()}")
    return fr


def split(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> Dataset:
    """Seeded random assignment of samples to train/validation/test."""
    fr = check_fractions(fractions)
    m = ds.n_samples
    bounds = np.rint(np.cumsum(fr) * m).astype(int)
    bounds[-1] = m
    order = np.random.default_rng(seed).permutation(m)
    tags = np.empty(m, dtype=object)
    start = 0
    for tag, stop in zip(SPLITS, bounds):
        tags[order[start:stop]] = tag
        start = stop
    return ds.with_split(tags)


def feature_r2(ds: Dataset) -> np.ndarray:
    """Squared Pearson correlation of each feature with the target on the training split."""
    x, y = ds.subset("train")
    if x.shape[0] < 2:
        raise DataError("feature_r2 needs at least two training samples")
    xc = x - x.mean(axis=0)
    yc = y - y.mean()
    sxx = np.einsum("ij,ij->j", xc, xc)
    syy = float(yc @ yc)
    sxy = xc.T @ yc
    out = np.zeros(x.shape[1])
    ok = sxx > 0
    if syy > 0:
        out[ok] = sxy[ok] ** 2 / (sxx[ok] * syy)
    return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 1000
    n_features: int = 200
    n_informative: int = 10
    decay: float = 0.5
    interaction_pairs: int = 0
    noise_r2: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1 or self.n_features < 1:
            raise ConfigurationError("n_samples and n_features must be positive")
        if not 0 <= self.n_informative <= self.n_features:
            raise ConfigurationError("n_informative must lie in [0, n_features]")
        if not (math.isfinite(self.decay) and 0.0 < self.decay <= 1.0):
            raise ConfigurationError("decay must lie in (0, 1]")
        if not (math.isfinite(self.noise_r2) and 0.0 <= self.noise_r2 < 1.0):
            raise ConfigurationError("noise_r2 must lie in [0, 1)")
        max_pairs = self.n_informative * (self.n_informative - 1) // 2
        if not 0 <= self.interaction_pairs <= max_pairs:
            raise ConfigurationError(
                f"interaction_pairs must lie in [0, {max_pairs}] for {self.n_informative} informative features"
            )


def synth_generate(cfg: SynthConfig) -> Dataset:
    """Gaussian features with a geometrically decaying linear signal plus optional pairwise products.

    ``beta_j = decay**j`` for the first ``n_informative`` columns and
    ``gamma_k = decay**k`` for the k-th interaction pair. Noise is scaled so
    that it accounts for ``noise_r2`` of the expected target variance. The
    true coefficients are kept in ``metadata``.
    """
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((cfg.n_samples, cfg.n_features))
    beta = cfg.decay ** np.arange(cfg.n_informative, dtype=np.float64)
    signal = x[:, : cfg.n_informative] @ beta

    all_pairs = list(itertools.combinations(range(cfg.n_informative), 2))
    chosen = rng.choice(len(all_pairs), size=cfg.interaction_pairs, replace=False) if all_pairs else []
    pairs = [all_pairs[i] for i in sorted(int(c) for c in chosen)]
    gamma = cfg.decay ** np.arange(len(pairs), dtype=np.float64)
    for g, (a, b) in zip(gamma, pairs):
        signal = signal + g * x[:, a] * x[:, b]

    # independent unit-variance terms, so the expected signal variance is exact
    signal_var = float(beta @ beta + gamma @ gamma)
    if signal_var > 0:
        noise_sd = math.sqrt(cfg.noise_r2 / (1.0 - cfg.noise_r2) * signal_var)
    else:
        noise_sd = 1.0
    y = signal + noise_sd * rng.standard_normal(cfg.n_samples)

    width = len(str(cfg.n_features - 1))
    names = [f"x{j:0{width}d}" for j in range(cfg.n_features)]
    meta = {
        "config": asdict(cfg),
        "beta": beta.tolist(),
        "interactions": [[a, b, float(g)] for (a, b), g in zip(pairs, gamma)],
        "noise_sd": noise_sd,
        "signal_variance": signal_var,
    }
    return Dataset(x, y, names, metadata=meta)


def save_synthetic(ds: Dataset, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "data.csv"
    meta_path = out_dir / "metadata.json"
    save_csv(ds, csv_path)
    meta_path.write_text(json.dumps(ds.metadata, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, meta_path
