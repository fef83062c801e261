"""Figure rendering for verification reports.

Opt-in from the CLI (--figures DIR): PNGs are written next to the delimited
output so a run leaves both machine-readable and eyeball-readable artifacts.
"""

from __future__ import annotations

import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from scipy import stats as sp_stats  # noqa: E402


def _save(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def histogram_figure(values, outdir, name, title=""):
    """Histogram of standardized values with the N(0,1) density overlaid."""
    z = np.asarray(values, dtype=float)
    sd = z.std(ddof=1)
    if sd > 0:
        z = (z - z.mean()) / sd
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.hist(z, bins=max(20, int(math.sqrt(len(z)))), density=True,
            alpha=0.65, color="#4878a8", edgecolor="white")
    grid = np.linspace(-4, 4, 301)
    ax.plot(grid, sp_stats.norm.pdf(grid), "k-", lw=1.2, label="N(0,1)")
    ax.set_xlabel("standardized value")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, outdir, name)


def qq_figure(values, outdir, name, title=""):
    z = np.asarray(values, dtype=float)
    sd = z.std(ddof=1)
    if sd > 0:
        z = (z - z.mean()) / sd
    fig, ax = plt.subplots(figsize=(4.0, 4.0))
    sp_stats.probplot(z, dist="norm", plot=ax)
    ax.get_lines()[0].set(markersize=2.5, alpha=0.5)
    ax.set_title(title or "normal Q-Q", fontsize=9)
    return _save(fig, outdir, name)


def fringe_figure(ks, empirical, analytic, outdir, name):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.bar(ks, empirical, width=0.6, alpha=0.65, color="#4878a8",
           label="empirical")
    ax.plot(ks, analytic, "k_", markersize=16, mew=2, label="analytic")
    ax.set_xlabel("fringe size k (leaves)")
    ax.set_ylabel("fraction of nodes")
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, outdir, name)


def trajectory_figure(values, target, outdir, name, ylabel=""):
    v = np.asarray(values, dtype=float)
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(v, ".", markersize=3, alpha=0.6, color="#4878a8")
    ax.axhline(target, color="k", lw=1.0, label="analytic limit")
    ax.set_xlabel("trial")
    ax.set_ylabel(ylabel or "value")
    ax.legend(frameon=False, fontsize=8)
    return _save(fig, outdir, name)


def render_report_figures(report, outdir, prefix="run") -> list:
    """Render the standard figure set for a SimReport; returns written paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    vals = report.values
    if vals is None:
        return written
    for j, info in enumerate(report.per_toll):
        name = info["toll"].replace("=", "").replace(":", "").replace(",", "_")
        col = vals[:, j]
        if np.var(col) <= 0:
            continue
        written.append(histogram_figure(
            col, outdir, f"{prefix}_{name}_hist.png",
            title=f"{info['toll']}: mean {info['mean']:.4g}, var {info['var']:.4g}"))
        written.append(qq_figure(col, outdir, f"{prefix}_{name}_qq.png",
                                 title=f"{info['toll']} Q-Q"))
    return written
