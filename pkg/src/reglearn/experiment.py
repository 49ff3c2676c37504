"""Grid search on validation loss and the synthetic RLN / DNN / linear benchmark."""

from __future__ import annotations

import csv
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import data as data_mod
from .analysis import garson_importance, importance_entropy, mean_pairwise_js, sparsity_report
from .ensemble import r2_score
from .errors import ConfigurationError, DataError, NumericError
from .network import Network, forward, mlp_specs, mse_loss
from .trainer import MODES, TrainConfig, linear_specs, train

METRICS = (
    "test_r2",
    "first_layer_zero_fraction",
    "network_zero_fraction",
    "eliminated_fraction",
    "importance_entropy",
)


@dataclass(frozen=True)
class Grid:
    """Candidate values per hyperparameter; ``hidden`` lists hidden-layer widths per architecture."""

    eta: tuple[float, ...] = (1e-3, 1e-2)
    nu: tuple[float, ...] = (1e3, 1e4, 1e5)
    theta: tuple[float, ...] = (-8.0, -6.0, -4.0)
    batch_size: tuple[int, ...] = (32,)
    epochs: tuple[int, ...] = (100,)
    hidden: tuple[tuple[int, ...], ...] = ((50, 10),)
    norm: tuple[str, ...] = ("l1",)
    activation: str = "relu"

    def __post_init__(self):
        for name in ("eta", "nu", "theta", "batch_size", "epochs", "hidden", "norm"):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigurationError(f"grid axis {name!r} is empty")
            object.__setattr__(self, name, values)
        object.__setattr__(self, "hidden", tuple(tuple(int(w) for w in h) for h in self.hidden))
        # build every point once so that invalid values surface before any training
        for mode in MODES:
            self.points(mode)

    def points(self, mode: str, seed: int = 0) -> list[tuple[TrainConfig, tuple[int, ...]]]:
        """Deterministic cross product; axes a mode ignores collapse and duplicates drop."""
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}")
        out, seen = [], set()
        for hidden, norm, bs, ep, eta, theta, nu in itertools.product(
            self.hidden, self.norm, self.batch_size, self.epochs, self.eta, self.theta, self.nu
        ):
            if mode != "rln":
                nu = 0.0
            if mode == "linear":
                hidden, norm = (), "l2"
            cfg = TrainConfig(
                eta=float(eta), nu=float(nu), theta=float(theta), epochs=int(ep),
                batch_size=int(bs), norm=norm, mode=mode, seed=seed,
            )
            key = (cfg, hidden)
            if key not in seen:
                seen.add(key)
                out.append(key)
        return out


def architecture(n_features: int, hidden: Sequence[int], mode: str, activation: str = "relu"):
    if mode == "linear":
        return linear_specs(n_features)
    return mlp_specs(n_features, hidden, activation)


@dataclass
class GridSearchResult:
    best_config: TrainConfig
    best_hidden: tuple[int, ...]
    leaderboard: list[dict]


def _score_point(args) -> tuple[int, float, str]:
    index, ds, cfg, hidden, activation = args
    try:
        net, _, _ = train(ds, architecture(ds.n_features, hidden, cfg.mode, activation), cfg)
        x_val, y_val = ds.subset("validation")
        score = mse_loss(forward(net, x_val), y_val)
        status = "ok" if math.isfinite(score) else "diverged"
    except NumericError:
        score, status = math.inf, "diverged"
    if not math.isfinite(score):
        score = math.inf
    return index, score, status


def _map(fn, tasks, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def grid_search(ds, grid: Grid, mode: str, *, seed: int = 0, jobs: int = 1) -> GridSearchResult:
    """Train every grid point on the training split and keep the lowest validation MSE.

    Ties go to the earliest point in grid order. Diverging points score ``inf``.
    """
    if ds.counts()["validation"] == 0:
        raise DataError("grid search needs a nonempty validation split")
    points = grid.points(mode, seed)
    tasks = [(i, ds, cfg, hidden, grid.activation) for i, (cfg, hidden) in enumerate(points)]
    scores = {i: (score, status) for i, score, status in _map(_score_point, tasks, jobs)}
    board = []
    for i, (cfg, hidden) in enumerate(points):
        score, status = scores[i]
        board.append({
            "index": i, "mode": mode, "eta": cfg.eta, "nu": cfg.nu, "theta": cfg.theta,
            "batch_size": cfg.batch_size, "epochs": cfg.epochs, "norm": cfg.norm,
            "hidden": "-".join(map(str, hidden)), "val_mse": score, "status": status,
        })
    best = min(range(len(points)), key=lambda i: (scores[i][0], i))
    cfg, hidden = points[best]
    return GridSearchResult(cfg, hidden, board)


def evaluate_network(net: Network, ds, epsilon: float = 0.0) -> dict:
    x_test, y_test = ds.subset("test")
    report = sparsity_report(net, epsilon)
    imp = garson_importance(net)
    entropy = importance_entropy(imp) if np.any(imp > 0) else math.nan
    return {
        "test_r2": r2_score(forward(net, x_test), y_test),
        "first_layer_zero_fraction": report.layer_zero_fraction[0],
        "network_zero_fraction": report.network_zero_fraction,
        "eliminated_fraction": report.eliminated_fraction,
        "importance_entropy": entropy,
    }


def seeds_for(master_seed: int, index: int) -> tuple[int, int]:
    """(data seed, model seed) for replicate ``index``."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2)
    return int(state[0]), int(state[1])


def prepare_synthetic(synth: data_mod.SynthConfig, fractions, seed: int):
    ds = data_mod.synth_generate(replace(synth, seed=seed))
    ds = data_mod.split(ds, fractions, seed)
    ds, _ = data_mod.standardize(ds)
    return ds


def instantiation_importances(ds, hidden, config: TrainConfig, seeds, activation="relu") -> list[np.ndarray]:
    """Garson importances of models that differ only in their training seed."""
    arch = architecture(ds.n_features, hidden, config.mode, activation)
    out = []
    for s in seeds:
        net, _, _ = train(ds, arch, replace(config, seed=int(s)))
        out.append(garson_importance(net))
    return out


@dataclass
class BenchmarkResult:
    rows: list[dict]
    leaderboards: dict[tuple[int, str], list[dict]] = field(default_factory=dict)
    consistency: dict[str, float] = field(default_factory=dict)

    def modes(self) -> list[str]:
        return list(dict.fromkeys(r["mode"] for r in self.rows))

    def aggregates(self) -> list[dict]:
        out = []
        for mode in self.modes():
            rows = [r for r in self.rows if r["mode"] == mode]
            for metric in METRICS:
                v = np.array([r[metric] for r in rows], dtype=np.float64)
                ok = v[np.isfinite(v)]
                out.append({
                    "mode": mode, "metric": metric, "n": int(ok.size),
                    "mean": float(ok.mean()) if ok.size else math.nan,
                    "std": float(ok.std()) if ok.size else math.nan,
                })
        return out

    def win_counts(self, metric: str = "test_r2") -> list[dict]:
        out = []
        for a, b in itertools.permutations(self.modes(), 2):
            t = trend_test(self, metric, a, b)
            out.append({"metric": metric, "mode_a": a, "mode_b": b, "wins": t.wins, "n": t.n,
                        "mean_difference": t.mean_difference})
        return out


def run_benchmark(
    synth: data_mod.SynthConfig,
    grids: dict[str, Grid],
    n_seeds: int,
    *,
    master_seed: int = 0,
    fractions=(0.6, 0.2, 0.2),
    n_instances: int = 0,
    epsilon: float = 0.0,
    jobs: int = 1,
    log=None,
) -> BenchmarkResult:
    """Per replicate: regenerate data, grid-search every mode, refit the winner on
    train+validation, and score it on the test split.

    With ``n_instances >= 2`` the first replicate also retrains each mode's
    winner under that many seeds and records the mean pairwise Jensen-Shannon
    divergence of their Garson importances.
    """
    if n_seeds < 1:
        raise ConfigurationError("n_seeds must be >= 1")
    for mode in grids:
        if mode not in MODES:
            raise ConfigurationError(f"unknown mode {mode!r}")
    rows, boards, consistency = [], {}, {}
    for rep in range(n_seeds):
        data_seed, model_seed = seeds_for(master_seed, rep)
        ds = prepare_synthetic(synth, fractions, data_seed)
        refit = ds.merged("train", "validation")
        for mode, grid in grids.items():
            found = grid_search(ds, grid, mode, seed=model_seed, jobs=jobs)
            boards[(rep, mode)] = found.leaderboard
            cfg, hidden = found.best_config, found.best_hidden
            net, _, _ = train(refit, architecture(ds.n_features, hidden, mode, grid.activation), cfg)
            row = {"mode": mode, "seed": rep, "data_seed": data_seed, "model_seed": model_seed,
                   **evaluate_network(net, refit, epsilon),
                   "eta": cfg.eta, "nu": cfg.nu, "theta": cfg.theta, "batch_size": cfg.batch_size,
                   "epochs": cfg.epochs, "norm": cfg.norm, "hidden": "-".join(map(str, hidden))}
            rows.append(row)
            if log:
                log(f"seed {rep} {mode}: test R2 {row['test_r2']:.4f}, "
                    f"zero {row['network_zero_fraction']:.3f}, eliminated {row['eliminated_fraction']:.3f}")
            if rep == 0 and n_instances >= 2:
                seeds = [seeds_for(model_seed, 1000 + k)[1] for k in range(n_instances)]
                imps = instantiation_importances(refit, hidden, cfg, seeds, grid.activation)
                usable = [v for v in imps if np.any(v > 0)]
                consistency[mode] = mean_pairwise_js(usable) if len(usable) >= 2 else math.nan
    return BenchmarkResult(rows, boards, consistency)


class TrendResult(NamedTuple):
    wins: int
    n: int
    mean_difference: float


def trend_test(result: BenchmarkResult, metric: str, mode_a: str, mode_b: str) -> TrendResult:
    """Seed-paired comparison: how often ``metric`` of ``mode_a`` exceeds ``mode_b``'s,
    and the mean paired difference ``a - b``."""
    a = {r["seed"]: r[metric] for r in result.rows if r["mode"] == mode_a}
    b = {r["seed"]: r[metric] for r in result.rows if r["mode"] == mode_b}
    if not a or not b:
        raise DataError(f"both {mode_a!r} and {mode_b!r} must be present")
    if set(a) != set(b):
        raise DataError("the two modes were not run on the same seeds")
    seeds = sorted(a)
    diffs = np.array([a[s] - b[s] for s in seeds], dtype=np.float64)
    wins = int(np.sum(diffs > 0))
    return TrendResult(wins, len(seeds), float(diffs.mean()))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_rows(rows: list[dict], path) -> Path:
    path = Path(path)
    if not rows:
        path.write_text("", encoding="utf-8")
        return path
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    return path


def write_benchmark(result: BenchmarkResult, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    (out_dir / "leaderboards").mkdir(parents=True, exist_ok=True)
    written = [
        write_rows(result.rows, out_dir / "results.csv"),
        write_rows(result.aggregates(), out_dir / "aggregates.csv"),
        write_rows(result.win_counts("test_r2"), out_dir / "wins.csv"),
    ]
    if result.consistency:
        written.append(write_rows(
            [{"mode": m, "mean_pairwise_jsd": v} for m, v in result.consistency.items()],
            out_dir / "consistency.csv",
        ))
    for (rep, mode), board in sorted(result.leaderboards.items()):
        written.append(write_rows(board, out_dir / "leaderboards" / f"seed{rep}_{mode}.csv"))
    (out_dir / "summary.txt").write_text(summary_text(result), encoding="utf-8")
    written.append(out_dir / "summary.txt")
    return written


def summary_text(result: BenchmarkResult) -> str:
    lines = ["mode metric mean std n"]
    for a in result.aggregates():
        lines.append(f"{a['mode']} {a['metric']} {a['mean']:.6f} {a['std']:.6f} {a['n']}")
    modes = result.modes()
    if "rln" in modes:
        for other in modes:
            if other == "rln":
                continue
            for metric in METRICS:
                t = trend_test(result, metric, "rln", other)
                lines.append(f"rln vs {other} {metric}: rln higher on {t.wins}/{t.n} seeds, "
                             f"mean difference {t.mean_difference:+.6f}")
    for mode, v in result.consistency.items():
        lines.append(f"{mode} mean pairwise JSD across instantiations: {v:.6f}")
    return "\n".join(lines) + "\n"
