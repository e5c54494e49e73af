"""Static figures from run artifacts (CSV tables, transfer grids).

All functions render to files via the Agg backend; nothing opens a window.
"""

import csv

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _read_csv(path) -> dict:
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {}
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def learning_curves(metrics_by_label: dict, out_path,
                    y: str = "mean_return", smooth: int = 10):
    """Overlay training curves from metrics.csv files.

    metrics_by_label maps a legend label to a CSV path. NaN rows (updates
    that finished no episode) are dropped; a running mean of `smooth`
    updates is drawn over the raw trace.
    """
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, path in metrics_by_label.items():
        cols = _read_csv(path)
        if not cols:
            continue
        x, v = cols["step"], cols[y]
        keep = ~np.isnan(v)
        x, v = x[keep], v[keep]
        ax.plot(x, v, alpha=0.25)
        if len(v) > smooth:
            kern = np.ones(smooth) / smooth
            ax.plot(x[smooth - 1:], np.convolve(v, kern, "valid"),
                    label=label)
        else:
            ax.plot(x, v, label=label)
    ax.set_xlabel("environment steps")
    ax.set_ylabel(y.replace("_", " "))
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def robustness_curve(rows: list, out_path, dimension: str):
    """rows: (magnitude, mean_return, stderr) triples for one dimension."""
    mags = [r[0] for r in rows]
    means = [r[1] for r in rows]
    errs = [r[2] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(mags, means, yerr=errs, marker="o", capsize=3)
    ax.set_xlabel(dimension.replace("_", " "))
    ax.set_ylabel("mean return")
    ax.axhline(means[0] * 0.5, ls="--", lw=0.8, color="gray")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def transfer_heatmap(shapes: list, normalized: np.ndarray, out_path):
    n = len(shapes)
    fig, ax = plt.subplots(figsize=(1.1 * n + 2, 1.0 * n + 1.5))
    im = ax.imshow(normalized, vmin=0.0, vmax=1.2, cmap="viridis")
    ax.set_xticks(range(n), shapes, rotation=45, ha="right")
    ax.set_yticks(range(n), shapes)
    ax.set_xlabel("evaluated on")
    ax.set_ylabel("trained on")
    for i in range(n):
        for j in range(n):
            v = normalized[i, j]
            txt = "n/a" if np.isnan(v) else f"{v:.2f}"
            ax.text(j, i, txt, ha="center", va="center",
                    color="white" if (np.isnan(v) or v < 0.7) else "black",
                    fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def ablation_bars(results: dict, out_path):
    """results: mask -> {"per_seed": [...], "mean_return": float}."""
    masks = list(results)
    means = [results[m]["mean_return"] for m in masks]
    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.bar(range(len(masks)), means, color="tab:blue")
    for i, m in enumerate(masks):
        for v in results[m]["per_seed"]:
            ax.plot(i, v, "k.", ms=8)
    ax.set_xticks(range(len(masks)), masks, rotation=20, ha="right")
    ax.set_ylabel("final mean return")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
