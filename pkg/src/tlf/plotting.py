"""Static SVG figures: timelines against reference, HCP counts, PR curves.

Figures are written with a fixed hash salt and no date stamp so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PRED_COLOR = "tab:orange"
REF_COLOR = "tab:blue"

_RC = {
    "svg.hashsalt": "tlf",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def _timeline_axes(ax, timeline, reference=None, title=None):
    seconds = np.arange(len(timeline.probs)) * timeline.sample_period_s
    if reference is not None:
        ax.step(seconds, reference, where="post", color=REF_COLOR, lw=1.2, label="reference")
    ax.step(seconds, timeline.probs, where="post", color=PRED_COLOR, lw=1.0, label="prediction")
    ax.axhline(timeline.threshold_used, color="0.6", lw=0.6, ls="--")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlim(0, max(len(seconds) * timeline.sample_period_s, 1))
    ax.set_ylabel("probability")
    ax.set_title(title or timeline.activity.value, loc="left")


def plot_timeline(path, timeline, reference=None, title=None) -> None:
    """One activity: predicted probability (orange) over the reference (blue)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 2.2))
        _timeline_axes(ax, timeline, reference, title)
        ax.set_xlabel("time (s)")
        ax.legend(loc="upper right", frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_hcp(ax, timestamps, estimated, truth=None):
    if truth is not None:
        ax.step(timestamps, truth, where="post", color=REF_COLOR, lw=1.2, label="reference")
    ax.step(timestamps, estimated, where="post", color=PRED_COLOR, lw=1.0, label="estimated")
    ax.set_ylabel("# HCP")
    ax.set_title("number of health care providers", loc="left")


def plot_timeline_panels(path, timelines: Mapping, references: Mapping | None = None,
                         hcp=None) -> None:
    """Stacked panels, one per activity, plus an optional HCP-count panel.

    Args:
        hcp: ``(timestamps, estimated, truth_or_None)``.
    """
    references = references or {}
    rows = len(timelines) + (1 if hcp is not None else 0)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(rows, 1, figsize=(7, 1.7 * rows), sharex=True, squeeze=False)
        axes = axes[:, 0]
        for ax, (activity, tl) in zip(axes, timelines.items()):
            _timeline_axes(ax, tl, references.get(activity))
        if hcp is not None:
            plot_hcp(axes[-1], *hcp)
        axes[-1].set_xlabel("time (s)")
        axes[0].legend(loc="upper right", frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_hcp_figure(path, timestamps, estimated, truth=None) -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 2.2))
        plot_hcp(ax, timestamps, estimated, truth)
        ax.set_xlabel("time (s)")
        ax.legend(loc="upper right", frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)


def plot_pr_curves(path, report) -> None:
    """Precision-recall curve per category from a detection evaluation."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4, 4))
        for cat, res in report.per_category.items():
            if len(res.recall):
                ax.plot(res.recall, res.precision, lw=1.0, label=f"{cat.value} AP={res.ap:.3f}")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(f"mAP@{report.iou_thresh:g} = {report.map50:.3f}", loc="left")
        ax.legend(loc="lower left", frameon=False, fontsize=7)
        fig.tight_layout()
        _save(fig, path)
