"""Figure rendering for the report path.

Overlay figures show the original series against the counterfactual with
changed time spans shaded; box plots summarize the per-instance metric
distributions per method. Everything renders headless to files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .core import ChangeMask, TimeSeriesInstance, mask_matrix


def save_overlay(
    path,
    x: TimeSeriesInstance,
    counterfactual: TimeSeriesInstance,
    mask: ChangeMask,
    title: str = "",
) -> None:
    """One panel per channel: original in red, counterfactual in blue,
    substituted spans shaded red."""
    channels = x.channels
    active = mask_matrix(mask, channels)
    fig, axes = plt.subplots(
        channels, 1, figsize=(8, 1.8 * channels + 0.8), sharex=True, squeeze=False
    )
    t = np.arange(x.length)
    for c in range(channels):
        ax = axes[c, 0]
        ax.plot(t, x.values[:, c], color="tab:red", lw=1.2, label="original")
        ax.plot(t, counterfactual.values[:, c], color="tab:blue", lw=1.2, label="counterfactual")
        for start, stop in _spans(active[:, c]):
            ax.axvspan(start - 0.5, stop - 0.5, color="red", alpha=0.15, lw=0)
        if channels > 1:
            ax.set_ylabel(f"ch {c}")
    axes[0, 0].legend(loc="upper right", fontsize="small")
    if title:
        fig.suptitle(title)
    axes[-1, 0].set_xlabel("time step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _spans(column: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(column)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    ends = np.concatenate((idx[breaks], [idx[-1]])) + 1
    return list(zip(starts.tolist(), ends.tolist()))


def save_metric_boxplot(path, report: dict, metric: str = "sparsity_nos_mean") -> None:
    """Distribution of one per-instance metric, one box per method."""
    methods = list(report["records"])
    data, labels = [], []
    for method in methods:
        vals = [
            rec[metric]
            for rec in report["records"][method]
            if rec.get(metric) is not None
        ]
        if vals:
            data.append(vals)
            labels.append(method)
    fig, ax = plt.subplots(figsize=(1.6 * max(len(labels), 2) + 2, 3.2))
    if data:
        ax.boxplot(data, tick_labels=labels)
    ax.set_ylabel(metric)
    ax.set_title(f"{metric} per instance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report_figures(
    report: dict,
    out_dir,
    overlays: Sequence[tuple[int, TimeSeriesInstance, TimeSeriesInstance, ChangeMask]] = (),
    metrics: Sequence[str] = ("sparsity", "sparsity_nos_mean", "proximity"),
) -> list[Path]:
    """Render the standard figure set next to the delimited output and
    return the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in metrics:
        path = out_dir / f"{metric}_boxplot.png"
        save_metric_boxplot(path, report, metric)
        written.append(path)
    for instance_id, x, cf, mask in overlays:
        path = out_dir / f"instance_{instance_id:04d}_overlay.png"
        save_overlay(path, x, cf, mask, title=f"instance {instance_id}")
        written.append(path)
    return written
