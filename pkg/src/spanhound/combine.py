"""Aggregates hard labels from several systems into agreement soft labels.

Each system is treated as one labeler: a character's probability is the
fraction of systems covering it, and the hard label keeps characters that
strictly more than half of the systems cover. Member soft outputs are
ignored; only their hard spans vote.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import Instance, Prediction
from .errors import FewerThanTwoSystemsError, InstanceMismatchError
from .metrics import MetricReport, evaluate_corpus
from .spans import CharSpan, SoftSpan, SpanSet, from_char_mask

__all__ = [
    "SystemOutput",
    "combine",
    "combine_corpus",
    "combination_report",
]


@dataclass(frozen=True)
class SystemOutput:
    """One system's hard labels, keyed by instance id."""

    tag: str
    spans: Mapping[str, SpanSet]

    def predictions(self) -> list[Prediction]:
        """The member as a standalone submission: hard spans at prob 1.0."""
        return [
            Prediction(
                instance_id=instance_id,
                hard=span_set,
                soft=tuple(SoftSpan(span=s, prob=1.0) for s in span_set),
            )
            for instance_id, span_set in self.spans.items()
        ]


def _agreement_counts(outputs: Sequence[SystemOutput], instance_id: str) -> np.ndarray:
    lengths = set()
    masks = []
    for out in outputs:
        if instance_id not in out.spans:
            raise InstanceMismatchError(
                f"system {out.tag!r} has no output for instance {instance_id!r}"
            )
        span_set = out.spans[instance_id]
        lengths.add(span_set.text_len)
        masks.append(span_set.to_char_mask())
    if len(lengths) != 1:
        raise InstanceMismatchError(
            f"systems disagree on answer length for {instance_id!r}: {sorted(lengths)}"
        )
    return np.sum(np.stack(masks).astype(np.int64), axis=0)


def combine(outputs: Sequence[SystemOutput], instance_id: str) -> Prediction:
    """Vote the systems' spans for one instance into a Prediction.

    Soft spans are maximal runs of equal nonzero agreement count at
    probability count/n; hard spans keep counts with 2*count > n.
    """
    if len(outputs) < 2:
        raise FewerThanTwoSystemsError(
            f"combination needs at least 2 systems, got {len(outputs)}"
        )
    n = len(outputs)
    counts = _agreement_counts(outputs, instance_id)
    hard = from_char_mask(counts * 2 > n)

    soft: list[SoftSpan] = []
    if counts.size:
        change = np.flatnonzero(np.diff(counts)) + 1
        starts = np.concatenate(([0], change))
        ends = np.concatenate((change, [counts.size]))
        for start, end in zip(starts, ends):
            k = int(counts[start])
            if k > 0:
                soft.append(SoftSpan(span=CharSpan(int(start), int(end)),
                                     prob=k / n))
    return Prediction(instance_id=instance_id, hard=hard, soft=tuple(soft))


def _shared_ids(outputs: Sequence[SystemOutput]) -> list[str]:
    reference = list(outputs[0].spans)
    ref_set = set(reference)
    for out in outputs[1:]:
        ids = set(out.spans)
        if ids != ref_set:
            missing = sorted(ref_set - ids)
            unexpected = sorted(ids - ref_set)
            raise InstanceMismatchError(
                f"system {out.tag!r} instance ids differ from {outputs[0].tag!r}: "
                f"missing={missing}, unexpected={unexpected}"
            )
    return reference


def combine_corpus(outputs: Sequence[SystemOutput]) -> list[Prediction]:
    """Combine every instance, in the first system's order."""
    if len(outputs) < 2:
        raise FewerThanTwoSystemsError(
            f"combination needs at least 2 systems, got {len(outputs)}"
        )
    return [combine(outputs, instance_id) for instance_id in _shared_ids(outputs)]


def combination_report(
    outputs: Sequence[SystemOutput], golds: Sequence[Instance],
) -> tuple[dict[str, MetricReport], MetricReport, list[Prediction]]:
    """Score every member and the combination against gold labels.

    Returns (per-member reports, combined report, combined predictions);
    member rows come out in input order for the comparison table.
    """
    combined = combine_corpus(outputs)
    per_system = {
        out.tag: evaluate_corpus(out.predictions(), golds) for out in outputs
    }
    return per_system, evaluate_corpus(combined, golds), combined
