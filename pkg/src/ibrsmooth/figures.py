"""File-rendered figures accompanying the delimited report outputs."""

from __future__ import annotations

import numpy as np

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def mse_boxplot(result, path) -> None:
    """Boxplot of per-replicate MSE by method, log scale."""
    methods = [m for j, m in enumerate(result.methods) if np.any(np.isfinite(result.mse[:, j]))]
    series = [
        result.mse[np.isfinite(result.mse[:, j]), j]
        for j, m in enumerate(result.methods)
        if m in methods
    ]
    fig, ax = plt.subplots(figsize=(6, 4))
    if series:
        ax.boxplot(series, tick_labels=methods)
        ax.set_yscale("log")
    ax.set_ylabel("MSE against the true function")
    cfg = result.config
    ax.set_title(f"{cfg.function.name}, n={cfg.n}, {cfg.reps} replicates")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def gcv_path_figure(fit, path) -> None:
    """GCV score and effective df along the iteration grid."""
    p = fit.path
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(p.ks[p.valid], p.gcv[p.valid], marker=".", lw=1)
    ax1.axvline(fit.k_hat, color="tab:red", lw=1, ls="--", label=f"selected k = {fit.k_hat}")
    ax1.set_xscale("log")
    ax1.set_xlabel("iterations k")
    ax1.set_ylabel("GCV score")
    ax1.legend(fontsize=8)
    ax2.plot(p.ks, p.df, marker=".", lw=1, color="tab:green")
    ax2.axvline(fit.k_hat, color="tab:red", lw=1, ls="--")
    ax2.set_xscale("log")
    ax2.set_xlabel("iterations k")
    ax2.set_ylabel("effective df")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def surface_figure(grid_x, grid_y, surfaces: dict, path) -> None:
    """Side-by-side 3-d surfaces on a regular grid (column-ordered dict)."""
    names = list(surfaces)
    fig = plt.figure(figsize=(4 * len(names), 3.6))
    side = int(round(np.sqrt(grid_x.size)))
    X = grid_x.reshape(side, side)
    Y = grid_y.reshape(side, side)
    for i, name in enumerate(names):
        ax = fig.add_subplot(1, len(names), i + 1, projection="3d")
        Z = np.asarray(surfaces[name], dtype=float).reshape(side, side)
        ax.plot_surface(X, Y, Z, cmap="viridis", linewidth=0)
        ax.set_title(name, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def split_errors_figure(result, path) -> None:
    """Per-split test errors with the mean marked."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    idx = np.arange(result.mpse.size)
    ax.bar(idx, result.mpse, color="tab:blue", alpha=0.8)
    ax.axhline(result.mean_mpse, color="tab:red", lw=1.2,
               label=f"mean = {result.mean_mpse:.2f}")
    ax.set_xlabel("split")
    ax.set_ylabel("mean squared prediction error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
