"""Report serialization: JSON with conventions, TSV layout, figure files."""

from __future__ import annotations

import json

from spanhound.combine import SystemOutput, combination_report
from spanhound.data import Prediction
from spanhound.metrics import CONVENTIONS, evaluate_corpus
from spanhound.report import (
    comparison_rows,
    comparison_tsv,
    report_tsv,
    write_comparison,
    write_report,
)
from spanhound.spans import CharSpan, SoftSpan, normalize

from .conftest import make_instance

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def small_report(with_annotations: bool = False):
    n = 20
    answer = "x" * n
    kwargs = {}
    if with_annotations:
        kwargs["annotator_sets"] = (normalize([CharSpan(2, 8)], n),)
    golds = [
        make_instance("r-1", answer=answer,
                      gold_hard=normalize([CharSpan(2, 8)], n),
                      gold_soft=(SoftSpan(CharSpan(2, 8), 1.0),), **kwargs),
        make_instance("r-2", answer=answer,
                      gold_hard=normalize([], n), gold_soft=(), **kwargs),
    ]
    preds = [
        Prediction("r-1", normalize([CharSpan(2, 8)], n),
                   (SoftSpan(CharSpan(2, 8), 1.0),)),
        Prediction("r-2", normalize([CharSpan(0, 4)], n),
                   (SoftSpan(CharSpan(0, 4), 0.5),)),
    ]
    return evaluate_corpus(preds, golds)


class TestReportTsv:
    def test_layout(self):
        text = report_tsv(small_report())
        lines = text.splitlines()
        assert lines[0] == "id\tiou\tspearman\tmax_iou"
        assert lines[1].startswith("r-1\t1.000000\t1.000000\t")
        assert lines[-1].startswith("mean\t")
        assert text.endswith("\n")

    def test_missing_max_iou_renders_empty_cell(self):
        lines = report_tsv(small_report()).splitlines()
        # no annotator sets anywhere: the max_iou column is empty
        assert all(line.split("\t")[3] == "" for line in lines[1:])

    def test_max_iou_filled_when_annotated(self):
        lines = report_tsv(small_report(with_annotations=True)).splitlines()
        assert lines[1].split("\t")[3] == "1.000000"


class TestWriteReport:
    def test_files_and_conventions(self, tmp_path):
        report = small_report()
        paths = write_report(report, tmp_path, stem="eval")
        assert paths["json"].name == "eval.json"
        stored = json.loads(paths["json"].read_text())
        assert stored["metadata"]["conventions"] == CONVENTIONS
        assert stored["mean_iou"] == report.mean_iou
        assert paths["tsv"].read_text() == report_tsv(report)

    def test_figures_are_real_pngs(self, tmp_path):
        paths = write_report(small_report(), tmp_path, stem="eval")
        for key in ("iou_histogram", "iou_corr_scatter"):
            data = paths[key].read_bytes()
            assert data.startswith(PNG_MAGIC)
            assert len(data) > 1000
        assert paths["iou_histogram"].parent.name == "figures"

    def test_figures_skippable(self, tmp_path):
        paths = write_report(small_report(), tmp_path, figures=False)
        assert set(paths) == {"json", "tsv"}
        assert not (tmp_path / "figures").exists()


class TestWriteComparison:
    def _inputs(self):
        n = 20
        answer = "y" * n
        gold = make_instance("c-1", answer=answer,
                             gold_hard=normalize([CharSpan(0, 10)], n),
                             gold_soft=(SoftSpan(CharSpan(0, 10), 1.0),))
        outputs = [
            SystemOutput("alpha", {"c-1": normalize([CharSpan(0, 10)], n)}),
            SystemOutput("beta", {"c-1": normalize([CharSpan(0, 6)], n)}),
            SystemOutput("gamma", {"c-1": normalize([CharSpan(0, 8)], n)}),
        ]
        return combination_report(outputs, [gold])

    def test_rows_keep_member_order_with_combined_last(self):
        per_system, combined, _ = self._inputs()
        text = comparison_tsv(comparison_rows(per_system, combined))
        systems = [line.split("\t")[0] for line in text.splitlines()[1:]]
        assert systems == ["alpha", "beta", "gamma", "combined"]

    def test_written_artifacts(self, tmp_path):
        per_system, combined, _ = self._inputs()
        paths = write_comparison(per_system, combined, tmp_path)
        stored = json.loads(paths["json"].read_text())
        assert {r["system"] for r in stored["rows"]} == {
            "alpha", "beta", "gamma", "combined"}
        assert stored["combined"]["metadata"]["conventions"] == CONVENTIONS
        assert paths["bars"].read_bytes().startswith(PNG_MAGIC)
        header = paths["tsv"].read_text().splitlines()[0]
        assert header == "system\tmean_iou\tmean_corr\tmean_max_iou"
