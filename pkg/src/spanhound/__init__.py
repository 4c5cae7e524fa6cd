"""Character-span hallucination detection for LLM answers.

A retrieve, detect, map pipeline over pluggable search and LLM backends,
plus the scoring, aggregation, and prompt-search tooling around it. Spans
are half-open character offsets into the unmodified answer text.
"""

from ._version import __version__
from .combine import SystemOutput, combination_report, combine, combine_corpus
from .data import (
    FieldMap,
    Instance,
    Prediction,
    read_jsonl,
    read_predictions,
    write_instances,
    write_predictions,
)
from .metrics import (
    CONVENTIONS,
    InstanceMetrics,
    MetricReport,
    evaluate_corpus,
    iou,
    max_iou,
    soft_label_vector,
    spearman,
)
from .spans import CharSpan, SoftSpan, SpanSet, from_char_mask, normalize

__all__ = [
    "__version__",
    "CharSpan",
    "SoftSpan",
    "SpanSet",
    "normalize",
    "from_char_mask",
    "iou",
    "spearman",
    "max_iou",
    "soft_label_vector",
    "CONVENTIONS",
    "InstanceMetrics",
    "MetricReport",
    "evaluate_corpus",
    "FieldMap",
    "Instance",
    "Prediction",
    "read_jsonl",
    "read_predictions",
    "write_instances",
    "write_predictions",
    "SystemOutput",
    "combine",
    "combine_corpus",
    "combination_report",
]
