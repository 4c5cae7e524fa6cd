"""Character-level evaluation metrics: IoU, Spearman correlation, MaxIoU.

Degenerate cases are not defined by the task and follow documented
conventions (see :data:`CONVENTIONS`); every report records them in its
metadata so downstream readers never have to guess.

* IoU of two empty span sets is 1.0 (a fully correct answer predicted as
  fully correct scores full credit); exactly one empty set scores 0.0.
* Spearman of two constant vectors is 1.0; exactly one constant vector
  scores 0.0. Ties take average ranks, the conventional definition.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyTextError,
    LengthMismatchError,
    MissingInstanceError,
    NoAnnotationsError,
)
from .spans import SoftSpan, SpanSet, intersect_count, union_count

__all__ = [
    "CONVENTIONS",
    "InstanceMetrics",
    "MetricReport",
    "iou",
    "spearman",
    "max_iou",
    "soft_label_vector",
    "evaluate_corpus",
]

# Recorded in every report's metadata; overridable per call for
# convention-sensitivity experiments.
CONVENTIONS: dict[str, float] = {
    "iou_both_empty": 1.0,
    "iou_one_empty": 0.0,
    "spearman_both_constant": 1.0,
    "spearman_one_constant": 0.0,
}


def iou(pred: SpanSet, gold: SpanSet, *,
        both_empty: float = 1.0, one_empty: float = 0.0) -> float:
    """Character-level intersection-over-union of two span sets."""
    if not pred and not gold:
        return both_empty
    if not pred or not gold:
        return one_empty
    return intersect_count(pred, gold) / union_count(pred, gold)


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties assigned the mean of their rank run."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        # natural ranks i+1 .. j+1 share their mean
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def spearman(pred: Sequence[float] | np.ndarray, gold: Sequence[float] | np.ndarray, *,
             both_constant: float = 1.0, one_constant: float = 0.0) -> float:
    """Spearman rank correlation with average ranks for ties."""
    x = np.asarray(pred, dtype=float)
    y = np.asarray(gold, dtype=float)
    if x.shape != y.shape:
        raise LengthMismatchError(f"vector lengths differ: {len(x)} vs {len(y)}")
    if len(x) == 0:
        raise EmptyTextError("spearman over zero-length vectors")
    x_const = bool(np.all(x == x[0]))
    y_const = bool(np.all(y == y[0]))
    if x_const and y_const:
        return both_constant
    if x_const or y_const:
        return one_constant
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / np.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def max_iou(pred: SpanSet, annotations: Sequence[SpanSet], *,
            both_empty: float = 1.0, one_empty: float = 0.0) -> float:
    """Best IoU against any single annotator's span set."""
    if not annotations:
        raise NoAnnotationsError("max_iou requires at least one annotation set")
    return max(
        iou(pred, ann, both_empty=both_empty, one_empty=one_empty)
        for ann in annotations
    )


def soft_label_vector(soft: Iterable[SoftSpan], text_len: int) -> np.ndarray:
    """Per-character probability vector: span prob inside, 0 elsewhere."""
    vec = np.zeros(text_len, dtype=float)
    for ss in soft:
        if ss.span.end > text_len:
            raise LengthMismatchError(
                f"soft span ({ss.span.start}, {ss.span.end}) exceeds text length {text_len}"
            )
        vec[ss.span.start:ss.span.end] = ss.prob
    return vec


@dataclass(frozen=True, slots=True)
class InstanceMetrics:
    instance_id: str
    iou: float
    corr: float
    max_iou: float | None = None


@dataclass(frozen=True)
class MetricReport:
    """Per-instance metrics plus their arithmetic means."""

    per_instance: tuple[InstanceMetrics, ...]
    mean_iou: float
    mean_corr: float
    mean_max_iou: float | None
    metadata: dict = field(default_factory=lambda: {"conventions": dict(CONVENTIONS)})

    def to_dict(self) -> dict:
        return {
            "mean_iou": self.mean_iou,
            "mean_corr": self.mean_corr,
            "mean_max_iou": self.mean_max_iou,
            "per_instance": [
                {
                    "id": m.instance_id,
                    "iou": m.iou,
                    "corr": m.corr,
                    "max_iou": m.max_iou,
                }
                for m in self.per_instance
            ],
            "metadata": self.metadata,
        }


def evaluate_corpus(preds, golds) -> MetricReport:
    """Score a corpus of predictions against gold instances.

    ``preds`` is a sequence of Prediction, ``golds`` a sequence of Instance
    carrying gold labels. Ids must align one-to-one; order follows golds.
    MaxIoU is computed only for instances with per-annotator sets and its
    mean covers those instances only.
    """
    pred_by_id = {p.instance_id: p for p in preds}
    gold_ids = [g.instance_id for g in golds]
    missing = [i for i in gold_ids if i not in pred_by_id]
    unexpected = [i for i in pred_by_id if i not in set(gold_ids)]
    if missing or unexpected:
        raise MissingInstanceError(
            f"prediction/gold id mismatch: missing={missing}, unexpected={unexpected}",
            missing=missing, unexpected=unexpected,
        )

    rows: list[InstanceMetrics] = []
    for inst in golds:
        if inst.gold_hard is None or inst.gold_soft is None:
            raise MissingInstanceError(
                f"instance {inst.instance_id!r} lacks gold labels required for evaluation"
            )
        pred = pred_by_id[inst.instance_id]
        n = len(inst.answer)
        iou_val = iou(pred.hard, inst.gold_hard)
        corr_val = spearman(
            soft_label_vector(pred.soft, n),
            soft_label_vector(inst.gold_soft, n),
        )
        mx = None
        if inst.annotator_sets:
            mx = max_iou(pred.hard, inst.annotator_sets)
        rows.append(InstanceMetrics(inst.instance_id, iou_val, corr_val, mx))

    mx_vals = [r.max_iou for r in rows if r.max_iou is not None]
    return MetricReport(
        per_instance=tuple(rows),
        mean_iou=float(np.mean([r.iou for r in rows])) if rows else 0.0,
        mean_corr=float(np.mean([r.corr for r in rows])) if rows else 0.0,
        mean_max_iou=float(np.mean(mx_vals)) if mx_vals else None,
    )
