"""Figure rendering for the report path: monitoring traces, run-length grids,
and frame heatmaps, saved as PNG next to the delimited outputs.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_trace_figure(times, s_values, h, path, alarms=None, title="CUSUM trace"):
    """Monitoring statistic against time with the control limit line."""
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(times, s_values, color="black", lw=1, label="$S_t$")
    ax.axhline(h, color="red", ls="--", lw=1, label="control limit $H$")
    if alarms:
        ax.scatter(
            alarms,
            [s_values[times.index(t)] for t in alarms],
            color="red",
            zorder=3,
            s=20,
            label="alarm",
        )
    ax.set_xlabel("frame")
    ax.set_ylabel("monitoring statistic")
    ax.set_title(title)
    ax.legend(loc="upper left", frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_grid_figure(report, path):
    """Bar chart of mean run lengths with standard-error bars, one bar per cell."""
    rows = [r for r in report.rows if r.estimate is not None]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(rows)), 4))
    if rows:
        labels = [r.label for r in rows]
        means = [r.estimate.mean_rl for r in rows]
        errs = [r.estimate.std_err for r in rows]
        ax.bar(range(len(rows)), means, yerr=errs, capsize=3, color="steelblue")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("mean run length")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_frame_figure(matrix, path, title=None):
    """Heatmap of one frame (or background/shift pattern)."""
    a = np.asarray(matrix, dtype=float)
    fig, ax = plt.subplots(figsize=(6, 6 * a.shape[0] / a.shape[1] + 1))
    im = ax.imshow(a, cmap="RdBu_r", aspect="auto")
    fig.colorbar(im, ax=ax, shrink=0.8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
