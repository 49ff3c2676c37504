"""Command-line interface: ``reglearn <command> [options]``.

Commands: synth, train, eval, analyze, benchmark, grid-search. Every
command accepts ``--config FILE`` (see :mod:`reglearn.config`); explicit
flags override the file, which overrides the defaults. The effective
configuration is saved as ``config.ini`` next to the outputs.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import experiment, plotting
from .analysis import garson_importance, importance_entropy, sparsity_report
from .config import RunConfig
from .ensemble import ModelSet, ensemble_predict, load_external_predictions, prediction_variance, r2_score
from .errors import ConfigurationError, DataError, NumericError
from .modelio import TrainedModel, load_model, save_model, write_record_csv, write_trajectory_csv
from .network import forward, mse_loss
from .trainer import MODES, train

log = logging.getLogger("reglearn")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

# flag destination -> (section, key)
SYNTH_FLAGS = {
    "samples": ("synth", "samples"),
    "features": ("synth", "features"),
    "informative": ("synth", "informative"),
    "decay": ("synth", "decay"),
    "interactions": ("synth", "interaction_pairs"),
    "noise_r2": ("synth", "noise_r2"),
    "synth_seed": ("synth", "seed"),
}
DATA_FLAGS = {
    "data": ("data", "path"),
    "target": ("data", "target"),
    "missing_policy": ("data", "missing_policy"),
    "split": ("data", "fractions"),
    "split_seed": ("data", "split_seed"),
}
TRAIN_FLAGS = {
    "mode": ("train", "mode"),
    "eta": ("train", "eta"),
    "nu": ("train", "nu"),
    "theta": ("train", "theta"),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "norm": ("train", "norm"),
    "weight_update": ("train", "weight_update"),
    "seed": ("train", "seed"),
    "sparsity_epsilon": ("train", "sparsity_epsilon"),
    "track_edges": ("train", "track_edges"),
    "hidden": ("arch", "hidden"),
    "activation": ("arch", "activation"),
}
GRID_FLAGS = {
    "grid_eta": ("grid", "eta"),
    "grid_nu": ("grid", "nu"),
    "grid_theta": ("grid", "theta"),
    "grid_batch_size": ("grid", "batch_size"),
    "grid_epochs": ("grid", "epochs"),
    "grid_hidden": ("grid", "hidden"),
    "grid_norm": ("grid", "norm"),
    "grid_activation": ("grid", "activation"),
}
BENCH_FLAGS = {
    "modes": ("benchmark", "modes"),
    "seeds": ("benchmark", "seeds"),
    "master_seed": ("benchmark", "master_seed"),
    "bench_split": ("benchmark", "fractions"),
    "instances": ("benchmark", "instances"),
    "epsilon": ("benchmark", "epsilon"),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="INI configuration file")
    p.add_argument("--out", metavar="DIR", help="output directory ([output] dir)")
    p.add_argument("--no-figures", action="store_true", help="skip rendering figures")


def _add_synth(p):
    g = p.add_argument_group("synthetic data")
    g.add_argument("--samples", type=str)
    g.add_argument("--features", type=str)
    g.add_argument("--informative", type=str)
    g.add_argument("--decay", type=str)
    g.add_argument("--interactions", type=str, help="number of pairwise interaction terms")
    g.add_argument("--noise-r2", type=str, help="fraction of target variance due to noise")
    g.add_argument("--synth-seed", type=str)


def _add_data(p):
    g = p.add_argument_group("data")
    g.add_argument("--data", metavar="CSV")
    g.add_argument("--target", help="target column name")
    g.add_argument("--missing-policy", choices=("reject_row", "mean_impute"))
    g.add_argument("--split", metavar="TR,VA,TE", help="train/validation/test fractions")
    g.add_argument("--split-seed", type=str)


def _add_train(p):
    g = p.add_argument_group("training")
    g.add_argument("--mode", choices=MODES)
    g.add_argument("--eta", type=str)
    g.add_argument("--nu", type=str)
    g.add_argument("--theta", type=str)
    g.add_argument("--epochs", type=str)
    g.add_argument("--batch-size", type=str)
    g.add_argument("--norm", choices=("l1", "l2"))
    g.add_argument("--weight-update", choices=("auto", "subgradient", "proximal"))
    g.add_argument("--seed", type=str)
    g.add_argument("--sparsity-epsilon", type=str)
    g.add_argument("--track-edges", type=str, help="first-layer edges whose (w, lambda) path is recorded")
    g.add_argument("--hidden", help="hidden widths joined by '-', e.g. 50-10; empty for none")
    g.add_argument("--activation", choices=("relu", "leaky_relu", "identity"))


def _add_grid(p):
    g = p.add_argument_group("grid (comma-separated candidates)")
    g.add_argument("--grid-eta", metavar="LIST")
    g.add_argument("--grid-nu", metavar="LIST")
    g.add_argument("--grid-theta", metavar="LIST")
    g.add_argument("--grid-batch-size", metavar="LIST")
    g.add_argument("--grid-epochs", metavar="LIST")
    g.add_argument("--grid-hidden", metavar="ARCHS", help="architectures separated by ';', e.g. '50-10;100'")
    g.add_argument("--grid-norm", metavar="LIST")
    g.add_argument("--grid-activation", choices=("relu", "leaky_relu", "identity"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reglearn", description="Train and analyse networks with learned per-weight regularization.")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic regression dataset")
    _add_common(p)
    _add_synth(p)
    p.set_defaults(func=cmd_synth, flag_map=SYNTH_FLAGS)

    p = sub.add_parser("train", help="train one model on a CSV dataset")
    _add_common(p)
    _add_data(p)
    _add_train(p)
    p.set_defaults(func=cmd_train, flag_map={**DATA_FLAGS, **TRAIN_FLAGS})

    p = sub.add_parser("eval", help="R^2 of one model or an ensemble on a CSV dataset")
    p.add_argument("--config", metavar="FILE")
    p.add_argument("--out", metavar="DIR", help="also write metrics.csv here")
    p.add_argument("--model", action="append", default=[], metavar="FILE", help="model file (repeatable)")
    p.add_argument("--external", action="append", default=[], metavar="FILE",
                   help="file of precomputed predictions, one per line (repeatable)")
    p.add_argument("--rows", choices=("all", "train", "validation", "test"), default="all",
                   help="evaluate on a split obtained with --split/--split-seed")
    _add_data(p)
    p.set_defaults(func=cmd_eval, flag_map=DATA_FLAGS)

    p = sub.add_parser("analyze", help="feature importance and sparsity of a trained model")
    _add_common(p)
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--epsilon", type=float, default=0.0, help="|w| <= epsilon counts as zero")
    p.set_defaults(func=cmd_analyze, flag_map={})

    p = sub.add_parser("benchmark", help="synthetic RLN / DNN / linear comparison over seeds")
    _add_common(p)
    _add_synth(p)
    _add_grid(p)
    g = p.add_argument_group("benchmark")
    g.add_argument("--modes", metavar="LIST")
    g.add_argument("--seeds", type=str, help="number of replicates")
    g.add_argument("--master-seed", type=str)
    g.add_argument("--bench-split", metavar="TR,VA,TE")
    g.add_argument("--instances", type=str, help="retrained instantiations for the consistency analysis")
    g.add_argument("--epsilon", type=str)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for grid points")
    p.set_defaults(func=cmd_benchmark, flag_map={**SYNTH_FLAGS, **GRID_FLAGS, **BENCH_FLAGS})

    p = sub.add_parser("grid-search", help="validation-loss grid search on a CSV dataset")
    _add_common(p)
    _add_data(p)
    _add_grid(p)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=str)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_grid_search, flag_map={
        **DATA_FLAGS, **GRID_FLAGS, "mode": ("train", "mode"), "seed": ("train", "seed"),
    })
    return parser


def _run_config(args) -> RunConfig:
    overrides = {}
    for dest, key in args.flag_map.items():
        value = getattr(args, dest, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "out", None) is not None:
        overrides[("output", "dir")] = args.out
    return RunConfig.load(args.config, overrides)


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.get("output", "dir")
    if not out:
        raise ConfigurationError("an output directory is required (--out or [output] dir)")
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ConfigurationError(f"{out} exists and is not a directory")
    return out


def _data_path(cfg: RunConfig) -> Path:
    path = cfg.get("data", "path")
    if not path:
        raise ConfigurationError("a data file is required (--data or [data] path)")
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such data file: {path}")
    return path


def _load_split(cfg: RunConfig, path: Path) -> data_mod.Dataset:
    ds = data_mod.load_csv(path, cfg.get("data", "target"), cfg.get("data", "missing_policy"))
    return data_mod.split(ds, cfg.get("data", "fractions"), cfg.get("data", "split_seed"))


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _r2_or_none(pred, y):
    try:
        return r2_score(pred, y)
    except DataError:
        return None


def cmd_synth(args, cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    synth = cfg.synth_config()
    ds = data_mod.synth_generate(synth)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, meta_path = data_mod.save_synthetic(ds, out)
    cfg.write(out / "config.ini")
    r2 = data_mod.feature_r2(ds)
    _write_csv(out / "feature_r2.csv", ["feature_name", "r2"], [(n, repr(float(v))) for n, v in zip(ds.feature_names, r2)])
    if not args.no_figures:
        plotting.plot_feature_r2(r2, out / "feature_r2.png")
    print(f"wrote {csv_path} and {meta_path} ({ds.n_samples} samples, {ds.n_features} features)")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    path = _data_path(cfg)
    out = _out_dir(cfg)
    config = cfg.train_config()
    hidden = cfg.get("arch", "hidden")
    activation = cfg.get("arch", "activation")

    ds = _load_split(cfg, path)
    ds, scaler = data_mod.standardize(ds)
    arch = experiment.architecture(ds.n_features, hidden, config.mode, activation)
    track = cfg.get("train", "track_edges")
    net, coeffs, record = train(ds, arch, config, track_edges=track if track > 0 else None)

    model = TrainedModel(net, config, coeffs if config.mode == "rln" else None, scaler,
                         ds.feature_names, ds.target_name)
    rows = []
    for tag in data_mod.SPLITS:
        x, y = ds.subset(tag)
        if x.shape[0] == 0:
            continue
        pred = forward(net, x)
        r2 = _r2_or_none(pred, y)
        rows.append((tag, x.shape[0], repr(mse_loss(pred, y)), "" if r2 is None else repr(r2)))

    out.mkdir(parents=True, exist_ok=True)
    save_model(model, out / "model.json")
    write_record_csv(record, out / "record.csv")
    write_trajectory_csv(record, out / "trajectory.csv")
    _write_csv(out / "metrics.csv", ["split", "n", "mse", "r2"], rows)
    cfg.write(out / "config.ini")
    if not args.no_figures and record.n_epochs:
        plotting.plot_training_curves(record, out / "training_curves.png")
        if record.edge_ids.size:
            plotting.plot_trajectories(record, out / "trajectories.png")
    for tag, n, mse, r2 in rows:
        print(f"{tag} R2 {r2 or 'undefined'} MSE {mse} (n={n})")
    return EXIT_OK


def cmd_eval(args, cfg: RunConfig) -> int:
    if not args.model and not args.external:
        raise ConfigurationError("give at least one --model or --external file")
    path = _data_path(cfg)
    for f in args.model + args.external:
        if not Path(f).is_file():
            raise DataError(f"no such file: {f}")
    out = Path(args.out) if args.out else None
    if out is not None and out.exists() and not out.is_dir():
        raise ConfigurationError(f"{out} exists and is not a directory")

    ds = data_mod.load_csv(path, cfg.get("data", "target"), cfg.get("data", "missing_policy"))
    if args.rows != "all":
        ds = data_mod.split(ds, cfg.get("data", "fractions"), cfg.get("data", "split_seed"))
        x, y = ds.subset(args.rows)
    else:
        x, y = ds.features, ds.targets
    if x.shape[0] == 0:
        raise DataError(f"the {args.rows} split is empty")

    members, names = [], []
    for f in args.model:
        model = load_model(f)
        if model.net.input_width != x.shape[1]:
            raise DataError(f"{f} expects {model.net.input_width} features, data has {x.shape[1]}")
        if model.feature_names is not None and list(model.feature_names) != ds.feature_names:
            raise DataError(f"feature columns of {path} do not match those {f} was trained on")
        members.append(model.predict_raw)
        names.append(str(f))
    external = []
    for f in args.external:
        external.append(load_external_predictions(f, x.shape[0]))
        names.append(str(f))

    ms = ModelSet(members, external)
    preds = ms.predictions(x)
    rows = [(name, repr(r2_score(p, y)), "") for name, p in zip(names, preds)]
    if len(ms) >= 2:
        rows.append(("ensemble", repr(r2_score(ensemble_predict(ms, x), y)), repr(prediction_variance(ms, x))))
    header = ["ensemble_name", "r2", "variance"]
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "metrics.csv", header, rows)
        cfg.write(out / "config.ini")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    model_path = Path(args.model)
    if not model_path.is_file():
        raise DataError(f"no such model file: {model_path}")
    if args.epsilon < 0:
        raise ConfigurationError("--epsilon must be nonnegative")
    out = _out_dir(cfg)
    model = load_model(model_path)
    net = model.net
    names = model.feature_names or [f"x{j}" for j in range(net.input_width)]
    imp = garson_importance(net)
    report = sparsity_report(net, args.epsilon)
    entropy = importance_entropy(imp) if np.any(imp > 0) else None
    summary = report.summary() + "\n" + (
        f"importance entropy (bits): {entropy:.6f}" if entropy is not None
        else "importance entropy (bits): undefined (every weight path is zero)"
    ) + "\n"

    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "importance.csv", ["feature_name", "importance"], [(n, repr(float(v))) for n, v in zip(names, imp)])
    (out / "sparsity.txt").write_text(summary, encoding="utf-8")
    cfg.write(out / "config.ini")
    if not args.no_figures:
        plotting.plot_importance(imp, out / "importance.png")
        plotting.plot_outgoing_weights(net, out / "outgoing_weights.png")
    sys.stdout.write(summary)
    return EXIT_OK


def cmd_benchmark(args, cfg: RunConfig) -> int:
    base = _out_dir(cfg)
    synth = cfg.synth_config()
    grids = cfg.grids()
    b = cfg.values["benchmark"]
    if b["seeds"] < 1:
        raise ConfigurationError("[benchmark] seeds must be >= 1")
    fractions = b["fractions"]
    data_mod.check_fractions(fractions)
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be >= 1")
    total = sum(len(g.points(m)) for m, g in grids.items())
    log.info("benchmark: %d grid points per replicate, %d replicates", total, b["seeds"])

    result = experiment.run_benchmark(
        synth, grids, b["seeds"], master_seed=b["master_seed"], fractions=fractions,
        n_instances=b["instances"], epsilon=b["epsilon"], jobs=args.jobs, log=log.info,
    )
    run_dir = base / f"run-{cfg.digest(('synth', 'grid', 'benchmark'))}"
    run_dir.mkdir(parents=True, exist_ok=True)
    experiment.write_benchmark(result, run_dir)
    cfg.write(run_dir / "config.ini")
    if not args.no_figures:
        plotting.plot_benchmark(result, run_dir / "benchmark.png")
        if result.consistency:
            plotting.plot_consistency(result.consistency, run_dir / "consistency.png")
    sys.stdout.write(experiment.summary_text(result))
    print(f"results in {run_dir}")
    return EXIT_OK


def cmd_grid_search(args, cfg: RunConfig) -> int:
    path = _data_path(cfg)
    base = _out_dir(cfg)
    mode = cfg.get("train", "mode")
    grid = cfg.grid(mode)
    if args.jobs < 1:
        raise ConfigurationError("--jobs must be >= 1")
    ds = _load_split(cfg, path)
    ds, _ = data_mod.standardize(ds)
    log.info("grid search: %d points", len(grid.points(mode)))
    found = experiment.grid_search(ds, grid, mode, seed=cfg.get("train", "seed"), jobs=args.jobs)

    best = RunConfig({s: dict(v) for s, v in cfg.values.items()})
    c = found.best_config
    for key in ("eta", "nu", "theta", "epochs", "batch_size", "norm"):
        best.set("train", key, getattr(c, key))
    best.set("arch", "hidden", "-".join(map(str, found.best_hidden)))
    best.set("arch", "activation", grid.activation)

    run_dir = base / f"run-{cfg.digest(('data', 'grid', 'train'))}"
    run_dir.mkdir(parents=True, exist_ok=True)
    experiment.write_rows(found.leaderboard, run_dir / "leaderboard.csv")
    cfg.write(run_dir / "config.ini")
    best.write(run_dir / "best.ini")
    top = min(found.leaderboard, key=lambda r: (r["val_mse"], r["index"]))
    print(f"best of {len(found.leaderboard)} points: eta {c.eta!r} nu {c.nu!r} theta {c.theta!r} "
          f"hidden {top['hidden'] or '(none)'} validation MSE {top['val_mse']!r}")
    print(f"results in {run_dir}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _run_config(args)
        return args.func(args, cfg)
    except ConfigurationError as exc:
        print(f"reglearn: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"reglearn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"reglearn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"reglearn: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
