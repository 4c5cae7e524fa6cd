"""JSONL readers and writers for task instances and system predictions.

Input records carry, per line: an id, a language code, the question shown
to the audited model, that model's answer text, and optional gold labels
(hard spans, soft spans, per-annotator spans). Key names follow the shared
task's files but are remappable through :class:`FieldMap` so the loader
survives upstream renames. Unknown fields ride along in ``Instance.extra``
and are written back verbatim, making read -> write -> read an identity.

All offsets in files are character offsets; validation rejects anything
outside the answer rather than clamping.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import (
    LabelBoundsError,
    MissingFieldError,
    ParseError,
    SpanhoundError,
)
from .spans import CharSpan, SoftSpan, SpanSet, normalize

__all__ = [
    "FieldMap",
    "Instance",
    "Prediction",
    "read_jsonl",
    "write_instances",
    "read_predictions",
    "write_predictions",
    "write_jsonl_atomic",
    "instance_record",
]


@dataclass(frozen=True)
class FieldMap:
    """JSON key names for the instance format."""

    id: str = "id"
    lang: str = "lang"
    question: str = "model_input"
    answer: str = "model_output_text"
    producing_model: str = "model_id"
    hard_labels: str = "hard_labels"
    soft_labels: str = "soft_labels"
    annotator_sets: str = "annotations"

    def known_keys(self) -> set[str]:
        return {
            self.id, self.lang, self.question, self.answer,
            self.producing_model, self.hard_labels, self.soft_labels,
            self.annotator_sets,
        }


@dataclass(frozen=True)
class Instance:
    """One record under audit: a question, an answer, optional gold labels."""

    instance_id: str
    lang: str
    question: str
    answer: str
    producing_model: str = ""
    gold_hard: SpanSet | None = None
    gold_soft: tuple[SoftSpan, ...] | None = None
    annotator_sets: tuple[SpanSet, ...] | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Prediction:
    """Hard span set plus disjoint probability spans for one instance."""

    instance_id: str
    hard: SpanSet
    soft: tuple[SoftSpan, ...]

    def __post_init__(self) -> None:
        _check_soft_disjoint(self.soft)


def _check_soft_disjoint(soft: Sequence[SoftSpan]) -> None:
    ordered = sorted(soft, key=lambda s: (s.span.start, s.span.end))
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.span.start < prev.span.end:
            raise ValueError(
                f"soft spans overlap: ({prev.span.start}, {prev.span.end}) and "
                f"({cur.span.start}, {cur.span.end})"
            )


def _parse_hard(pairs, text_len: int, line: int) -> SpanSet:
    try:
        spans = [CharSpan(int(s), int(e)) for s, e in pairs]
        return normalize(spans, text_len)
    except SpanhoundError as exc:
        raise LabelBoundsError(str(exc), line) from exc
    except (TypeError, ValueError) as exc:
        raise ParseError(f"malformed hard label entry: {exc}", line) from exc


def _parse_soft(objs, text_len: int, line: int) -> tuple[SoftSpan, ...]:
    out = []
    try:
        for obj in objs:
            span = CharSpan(int(obj["start"]), int(obj["end"]))
            out.append(SoftSpan(span=span, prob=float(obj["prob"])))
    except SpanhoundError as exc:
        raise LabelBoundsError(str(exc), line) from exc
    except (TypeError, KeyError, ValueError) as exc:
        raise ParseError(f"malformed soft label entry: {exc}", line) from exc
    for ss in out:
        if ss.span.end > text_len:
            raise LabelBoundsError(
                f"soft span ({ss.span.start}, {ss.span.end}) exceeds answer length {text_len}",
                line,
            )
    try:
        _check_soft_disjoint(out)
    except ValueError as exc:
        raise ParseError(str(exc), line) from exc
    return tuple(out)


def read_jsonl(path: str | Path, fields: FieldMap = FieldMap()) -> list[Instance]:
    """Parse an instance file, raising line-numbered errors on bad records."""
    instances: list[Instance] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", lineno) from exc
            if not isinstance(record, dict):
                raise ParseError("record is not a JSON object", lineno)
            instances.append(_instance_from_record(record, fields, lineno))
    return instances


def _instance_from_record(record: dict, fields: FieldMap, lineno: int) -> Instance:
    for name in (fields.id, fields.lang, fields.question, fields.answer):
        if name not in record:
            raise MissingFieldError(name, lineno)
    answer = record[fields.answer]
    if not isinstance(answer, str) or not answer:
        raise ParseError(f"field {fields.answer!r} must be a nonempty string", lineno)
    text_len = len(answer)

    gold_hard = None
    if fields.hard_labels in record and record[fields.hard_labels] is not None:
        gold_hard = _parse_hard(record[fields.hard_labels], text_len, lineno)
    gold_soft = None
    if fields.soft_labels in record and record[fields.soft_labels] is not None:
        gold_soft = _parse_soft(record[fields.soft_labels], text_len, lineno)
    annotator_sets = None
    if fields.annotator_sets in record and record[fields.annotator_sets] is not None:
        annotator_sets = tuple(
            _parse_hard(pairs, text_len, lineno)
            for pairs in record[fields.annotator_sets]
        )

    extra = {k: v for k, v in record.items() if k not in fields.known_keys()}
    return Instance(
        instance_id=str(record[fields.id]),
        lang=str(record[fields.lang]),
        question=str(record[fields.question]),
        answer=answer,
        producing_model=str(record.get(fields.producing_model, "")),
        gold_hard=gold_hard,
        gold_soft=gold_soft,
        annotator_sets=annotator_sets,
        extra=extra,
    )


def instance_record(inst: Instance, fields: FieldMap) -> dict:
    record: dict = {
        fields.id: inst.instance_id,
        fields.lang: inst.lang,
        fields.question: inst.question,
        fields.answer: inst.answer,
    }
    if inst.producing_model:
        record[fields.producing_model] = inst.producing_model
    if inst.gold_hard is not None:
        record[fields.hard_labels] = inst.gold_hard.as_pairs()
    if inst.gold_soft is not None:
        record[fields.soft_labels] = [
            {"start": s.span.start, "end": s.span.end, "prob": s.prob}
            for s in inst.gold_soft
        ]
    if inst.annotator_sets is not None:
        record[fields.annotator_sets] = [s.as_pairs() for s in inst.annotator_sets]
    record.update(inst.extra)
    return record


def write_jsonl_atomic(records: Iterable[dict], path: str | Path) -> None:
    """Serialize records one per line, via temp file + rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
    os.replace(tmp, path)


def write_instances(instances: Sequence[Instance], path: str | Path,
                    fields: FieldMap = FieldMap()) -> None:
    write_jsonl_atomic((instance_record(i, fields) for i in instances), path)


def write_predictions(preds: Sequence[Prediction], path: str | Path) -> None:
    """Emit the submission format: id, hard_labels pairs, soft_labels objects."""
    def records():
        for pred in preds:
            yield {
                "id": pred.instance_id,
                "hard_labels": pred.hard.as_pairs(),
                "soft_labels": [
                    {"start": s.span.start, "end": s.span.end, "prob": s.prob}
                    for s in pred.soft
                ],
            }
    write_jsonl_atomic(records(), path)


def read_predictions(path: str | Path, text_lens: Mapping[str, int]) -> list[Prediction]:
    """Parse a prediction file; ``text_lens`` supplies each answer's length."""
    preds: list[Prediction] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc}", lineno) from exc
            for name in ("id", "hard_labels", "soft_labels"):
                if name not in record:
                    raise MissingFieldError(name, lineno)
            instance_id = str(record["id"])
            if instance_id not in text_lens:
                raise ParseError(f"unknown instance id {instance_id!r}", lineno)
            n = text_lens[instance_id]
            preds.append(Prediction(
                instance_id=instance_id,
                hard=_parse_hard(record["hard_labels"], n, lineno),
                soft=_parse_soft(record["soft_labels"], n, lineno),
            ))
    return preds
