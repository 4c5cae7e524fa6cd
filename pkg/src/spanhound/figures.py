"""Figure rendering for evaluation and combination reports.

Everything draws through the Agg backend straight to files; no display is
ever required. Callers pass the metric structures, not raw data, so the
plots stay consistent with the tables they sit next to.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricReport  # noqa: E402

__all__ = [
    "save_iou_histogram",
    "save_iou_corr_scatter",
    "save_comparison_bars",
]


def save_iou_histogram(report: MetricReport, path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    values = [m.iou for m in report.per_instance]
    ax.hist(values, bins=20, range=(0.0, 1.0), color="#4878a8", edgecolor="white")
    ax.axvline(report.mean_iou, color="#b3402e", linestyle="--",
               label=f"mean {report.mean_iou:.3f}")
    ax.set_xlabel("character IoU")
    ax.set_ylabel("instances")
    ax.set_title("Per-instance IoU")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_iou_corr_scatter(report: MetricReport, path: str | Path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter([m.iou for m in report.per_instance],
               [m.corr for m in report.per_instance],
               s=18, alpha=0.7, color="#4878a8")
    ax.set_xlim(-0.05, 1.05)
    ax.set_ylim(-1.05, 1.05)
    ax.set_xlabel("character IoU")
    ax.set_ylabel("probability correlation")
    ax.set_title("IoU vs correlation")
    ax.grid(True, linewidth=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_comparison_bars(rows: Sequence[dict], path: str | Path) -> Path:
    """Grouped mean IoU / mean correlation bars, one group per system."""
    path = Path(path)
    tags = [r["system"] for r in rows]
    ious = [r["mean_iou"] for r in rows]
    corrs = [r["mean_corr"] for r in rows]
    x = range(len(tags))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(tags)), 4))
    ax.bar([i - width / 2 for i in x], ious, width, label="mean IoU",
           color="#4878a8")
    ax.bar([i + width / 2 for i in x], corrs, width, label="mean Corr",
           color="#74a87c")
    ax.set_xticks(list(x))
    ax.set_xticklabels(tags, rotation=20, ha="right")
    ax.set_ylim(0, 1.05)
    ax.set_title("System comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
