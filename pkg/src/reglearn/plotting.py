"""Report figures rendered to image files with a non-interactive backend."""

from __future__ import annotations

import math
from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (math.sqrt(5) - 1.0) / 2.0

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

MODE_COLORS = {"rln": "#c0392b", "dnn_uniform": "#2c7fb8", "linear": "#7f7f7f"}


@contextmanager
def figure(path, ncols: int = 1, width: float = 4.5, ratio: float = GOLDEN):
    """Yield a styled figure and its axes, then save it to ``path`` and close it."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, ncols, figsize=(width * ncols, width * ratio))
        try:
            yield fig, axes
            fig.savefig(Path(path))
        finally:
            plt.close(fig)


def plot_feature_r2(r2, path) -> Path:
    """Univariate R^2 of every feature, sorted in decreasing order."""
    v = np.sort(np.asarray(r2, dtype=np.float64))[::-1]
    with figure(path) as (fig, ax):
        ax.plot(np.arange(1, v.size + 1), v, marker=".", markersize=3, color="k")
        ax.set_xlabel("feature rank")
        ax.set_ylabel("univariate $R^2$ with target")
        ax.set_xlim(0, v.size + 1)
    return Path(path)


def plot_training_curves(record, path) -> Path:
    epochs = np.arange(1, record.n_epochs + 1)
    with figure(path, ncols=2) as (fig, (ax_loss, ax_zero)):
        ax_loss.plot(epochs, record.train_loss, label="train", color="k")
        if record.val_loss:
            ax_loss.plot(epochs, record.val_loss, label="validation", color="#c0392b")
        ax_loss.set_xlabel("epoch")
        ax_loss.set_ylabel("MSE")
        ax_loss.legend(frameon=False)
        zf = np.asarray(record.zero_fraction, dtype=np.float64).reshape(record.n_epochs, -1)
        for k in range(zf.shape[1]):
            ax_zero.plot(epochs, 100 * zf[:, k], label=f"layer {k}")
        ax_zero.set_xlabel("epoch")
        ax_zero.set_ylabel("zero weights (%)")
        ax_zero.set_ylim(0, 100)
        ax_zero.legend(frameon=False)
    return Path(path)


def plot_trajectories(record, path) -> Path:
    """Tracked first-layer edges in the (w, lambda) plane, with the first layer's
    percentage of zero weights per epoch on a secondary axis."""
    w = np.asarray(record.edge_w, dtype=np.float64)
    lam = np.asarray(record.edge_lambda, dtype=np.float64)
    with figure(path, ncols=2) as (fig, (ax_path, ax_time)):
        for j in range(w.shape[1] if w.ndim == 2 else 0):
            ax_path.plot(w[:, j], lam[:, j], linewidth=0.8, alpha=0.8)
            ax_path.plot(w[-1, j], lam[-1, j], "o", markersize=2.5, color="k")
        ax_path.set_xlabel("w")
        ax_path.set_ylabel(r"$\lambda$")
        epochs = np.arange(1, record.n_epochs + 1)
        if w.ndim == 2 and w.size:
            ax_time.plot(epochs, lam, linewidth=0.6, color="#2c7fb8", alpha=0.6)
        ax_time.set_xlabel("epoch")
        ax_time.set_ylabel(r"$\lambda$ of tracked edges")
        right = ax_time.twinx()
        right.spines["right"].set_visible(True)
        zf = [100 * z[0] for z in record.zero_fraction]
        right.plot(epochs, zf, color="k", linewidth=1.5)
        right.set_ylabel("first-layer zero weights (%)")
        right.set_ylim(0, 100)
    return Path(path)


def plot_importance(importance, path, top: int = 30) -> Path:
    v = np.sort(np.asarray(importance, dtype=np.float64))[::-1]
    with figure(path) as (fig, ax):
        ax.bar(np.arange(1, v.size + 1), v, width=1.0, color="#2c7fb8")
        ax.set_xlim(0.5, min(v.size, top) + 0.5)
        ax.set_xlabel("feature rank")
        ax.set_ylabel("Garson importance")
    return Path(path)


def plot_outgoing_weights(net, path) -> Path:
    """For each input feature, its outgoing first-layer |w| sorted in decreasing order;
    features are ordered by their largest outgoing weight."""
    a = np.abs(net.weights[0]).T
    a = -np.sort(-a, axis=1)
    a = a[np.argsort(-a[:, 0], kind="stable")]
    with figure(path, ratio=0.8) as (fig, ax):
        im = ax.imshow(a, aspect="auto", cmap="Greys", interpolation="nearest")
        ax.set_xlabel("outgoing edge rank")
        ax.set_ylabel("input feature (sorted)")
        fig.colorbar(im, ax=ax, label="|w|")
    return Path(path)


def plot_benchmark(result, path) -> Path:
    """Per-mode test R^2 and importance entropy across replicates."""
    modes = result.modes()
    with figure(path, ncols=2) as (fig, axes):
        for ax, metric, label in zip(axes, ("test_r2", "importance_entropy"), ("test $R^2$", "entropy (bits)")):
            for i, mode in enumerate(modes):
                v = np.array([r[metric] for r in result.rows if r["mode"] == mode], dtype=np.float64)
                v = v[np.isfinite(v)]
                x = np.full(v.size, i, dtype=np.float64)
                ax.plot(x, v, "o", markersize=3, alpha=0.7, color=MODE_COLORS.get(mode, "k"))
                if v.size:
                    ax.hlines(v.mean(), i - 0.25, i + 0.25, color="k")
            ax.set_xticks(range(len(modes)))
            ax.set_xticklabels(modes)
            ax.set_ylabel(label)
    return Path(path)


def plot_consistency(consistency: dict, path) -> Path:
    """Mean pairwise Jensen-Shannon divergence of importances per mode."""
    modes = list(consistency)
    with figure(path) as (fig, ax):
        ax.bar(range(len(modes)), [consistency[m] for m in modes],
               color=[MODE_COLORS.get(m, "k") for m in modes])
        ax.set_xticks(range(len(modes)))
        ax.set_xticklabels(modes)
        ax.set_ylabel("mean pairwise JSD (bits)")
    return Path(path)
