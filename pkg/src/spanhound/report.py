"""Serializes metric reports as JSON, TSV, and rendered figures.

The JSON form is the machine artifact (it carries the metric conventions
in its metadata); the TSV is the eyeball artifact; the figures sit beside
them under ``figures/``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .metrics import MetricReport

__all__ = [
    "report_tsv",
    "comparison_rows",
    "comparison_tsv",
    "write_report",
    "write_comparison",
]


def _cell(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def report_tsv(report: MetricReport) -> str:
    lines = ["id\tiou\tspearman\tmax_iou"]
    for m in report.per_instance:
        lines.append(f"{m.instance_id}\t{_cell(m.iou)}\t{_cell(m.corr)}"
                     f"\t{_cell(m.max_iou)}")
    lines.append(f"mean\t{_cell(report.mean_iou)}\t{_cell(report.mean_corr)}"
                 f"\t{_cell(report.mean_max_iou)}")
    return "\n".join(lines) + "\n"


def write_report(report: MetricReport, out_dir: str | Path, *,
                 figures: bool = True, stem: str = "report") -> dict[str, Path]:
    """Write ``<stem>.json``, ``<stem>.tsv``, and the report figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    json_path = out_dir / f"{stem}.json"
    json_path.write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False)
        + "\n",
        encoding="utf-8",
    )
    paths["json"] = json_path

    tsv_path = out_dir / f"{stem}.tsv"
    tsv_path.write_text(report_tsv(report), encoding="utf-8")
    paths["tsv"] = tsv_path

    if figures:
        from .figures import save_iou_corr_scatter, save_iou_histogram

        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        paths["iou_histogram"] = save_iou_histogram(
            report, fig_dir / f"{stem}_iou_hist.png")
        paths["iou_corr_scatter"] = save_iou_corr_scatter(
            report, fig_dir / f"{stem}_iou_corr.png")
    return paths


def comparison_rows(per_system: dict[str, MetricReport],
                    combined: MetricReport) -> list[dict]:
    rows = [
        {
            "system": tag,
            "mean_iou": rep.mean_iou,
            "mean_corr": rep.mean_corr,
            "mean_max_iou": rep.mean_max_iou,
        }
        for tag, rep in per_system.items()
    ]
    rows.append({
        "system": "combined",
        "mean_iou": combined.mean_iou,
        "mean_corr": combined.mean_corr,
        "mean_max_iou": combined.mean_max_iou,
    })
    return rows


def comparison_tsv(rows: Sequence[dict]) -> str:
    lines = ["system\tmean_iou\tmean_corr\tmean_max_iou"]
    for row in rows:
        lines.append(f"{row['system']}\t{_cell(row['mean_iou'])}"
                     f"\t{_cell(row['mean_corr'])}\t{_cell(row['mean_max_iou'])}")
    return "\n".join(lines) + "\n"


def write_comparison(per_system: dict[str, MetricReport], combined: MetricReport,
                     out_dir: str | Path, *, figures: bool = True) -> dict[str, Path]:
    """Write the member-vs-combined table and its bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = comparison_rows(per_system, combined)
    paths: dict[str, Path] = {}

    json_path = out_dir / "comparison.json"
    json_path.write_text(
        json.dumps({
            "rows": rows,
            "systems": {tag: rep.to_dict() for tag, rep in per_system.items()},
            "combined": combined.to_dict(),
        }, sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    paths["json"] = json_path

    tsv_path = out_dir / "comparison.tsv"
    tsv_path.write_text(comparison_tsv(rows), encoding="utf-8")
    paths["tsv"] = tsv_path

    if figures:
        from .figures import save_comparison_bars

        fig_dir = out_dir / "figures"
        fig_dir.mkdir(exist_ok=True)
        paths["bars"] = save_comparison_bars(rows, fig_dir / "comparison.png")
    return paths
