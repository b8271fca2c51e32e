"""Matplotlib figures written next to the CSV reports.

Only the command line imports this module; the forecasting engine itself has
no graphics dependency.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

COLORS = {"actual": "black", "combined": "tab:red", "lem": "goldenrod", "rnn": "tab:blue", "kf": "tab:orange"}
# fixed metadata keeps PNG bytes stable between identical runs
_META = {"Software": None}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams.update({"font.size": 9, "axes.spines.top": False, "axes.spines.right": False})
    return plt


def gw_heatmap(names, pvalues, path):
    """Chessboard of GW p-values: columns are the candidate better model."""
    plt = _pyplot()
    from matplotlib.colors import LinearSegmentedColormap

    cmap = LinearSegmentedColormap.from_list("gw", ["darkgreen", "yellowgreen", "gold", "red", "black"])
    cmap.set_bad("white")
    k = len(names)
    fig, ax = plt.subplots(figsize=(1.0 + 0.6 * k, 0.8 + 0.6 * k))
    shown = np.ma.masked_invalid(np.where(pvalues > 0.1, 0.1, pvalues))
    im = ax.imshow(shown, cmap=cmap, vmin=0.0, vmax=0.1)
    ax.set_xticks(range(k), names, rotation=90)
    ax.set_yticks(range(k), names)
    ax.set_xlabel("better")
    ax.set_ylabel("worse")
    fig.colorbar(im, ax=ax, label="p-value")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def rmse_by_hour(report, path):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.5, 3.2))
    for name, m in report.metrics.items():
        ax.plot(np.arange(m.rmse_hour.size), m.rmse_hour, marker="o", ms=3, label=name)
    ax.set_xlabel("hour")
    ax.set_ylabel("RMSE (EUR/MWh)")
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)


def decomposition(names, rows, path, xlabel):
    """Line chart of actual, combined and per-branch series from a decomposition table."""
    plt = _pyplot()
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(7.0, 3.4))
    for j, name in enumerate(names):
        y = np.array([np.nan if r[j + 1] is None else r[j + 1] for r in rows], dtype=float)
        if np.all(np.isnan(y)):
            continue
        style = "--" if name == "actual" else "-"
        ax.plot(x, y, style, color=COLORS.get(name), label=name, lw=1.2)
    if xlabel == "date" and len(rows) > 1:
        step = max(1, len(rows) // 8)
        ax.set_xticks(x[::step], [str(r[0]) for r in rows][::step], rotation=30, ha="right")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("EUR/MWh")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)
    return Path(path)
