"""Figures for factor-analysis and lesion-study reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}


def stage_figure(report, path, metric: str = "modeled_speedup"):
    """Bar chart of one report column across stages, log-scaled like a throughput plot."""
    names = [r["stage"] for r in report.rows]
    values = [r[metric] for r in report.rows]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.2, 2.8))
        bars = ax.bar(range(len(values)), values, color="#4c72b0", width=0.6)
        ax.set_yscale("log")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=20, ha="right")
        ax.set_ylabel(metric.replace("_", " "))
        ax.set_title(report.title)
        for b, v in zip(bars, values):
            ax.annotate(f"{v:.3g}", (b.get_x() + b.get_width() / 2, v), ha="center", va="bottom", fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def timeline_figure(predicted, reference, fps: float, path):
    """Predicted vs reference presence over time."""
    import numpy as np

    t = np.arange(len(predicted)) / fps
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 1.8))
        ax.fill_between(t, 0, np.asarray(reference, float), step="post", alpha=0.35, label="reference")
        ax.step(t, np.asarray(predicted, float) * 0.9, where="post", lw=0.8, color="k", label="cascade")
        ax.set_yticks([])
        ax.set_xlabel("time (s)")
        ax.legend(loc="upper right", fontsize=7, frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path
