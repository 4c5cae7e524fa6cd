"""Character-span algebra over Unicode text.

Spans are half-open ``[start, end)`` intervals counted in Unicode scalar
values (Python string indices), never bytes: offsets must survive zh/ar/hi
answers unchanged. A :class:`SpanSet` is the unique normalized form of a
collection of spans over one text; every metric and mapper in the package
trades in these types.

Emptiness is represented by absence: zero-length spans are rejected at
construction rather than silently dropped, so upstream mapping bugs surface
immediately.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .errors import InvertedSpanError, LengthMismatchError, OffsetOutOfBoundsError

__all__ = [
    "CharSpan",
    "SoftSpan",
    "SpanSet",
    "normalize",
    "from_char_mask",
    "intersect_count",
    "union_count",
]


@dataclass(frozen=True, slots=True, order=True)
class CharSpan:
    """Half-open character interval ``[start, end)``; never empty."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise OffsetOutOfBoundsError(f"span start {self.start} is negative")
        if self.start >= self.end:
            raise InvertedSpanError(f"span ({self.start}, {self.end}) has start >= end")

    def __len__(self) -> int:
        return self.end - self.start

    def overlaps_or_touches(self, other: CharSpan) -> bool:
        return self.start <= other.end and other.start <= self.end


@dataclass(frozen=True, slots=True)
class SoftSpan:
    """A span with the proportion of annotators (or systems) marking it."""

    span: CharSpan
    prob: float

    def __post_init__(self) -> None:
        if not 0.0 < self.prob <= 1.0:
            raise ValueError(f"soft span probability {self.prob} outside (0, 1]")


@dataclass(frozen=True)
class SpanSet:
    """Normalized spans over a text of ``text_len`` characters.

    Invariants (enforced at construction): spans sorted ascending, pairwise
    disjoint, non-adjacent (touching spans are merged by :func:`normalize`),
    and contained in ``[0, text_len)``. Build instances through
    :func:`normalize` unless the input is already canonical.
    """

    spans: tuple[CharSpan, ...]
    text_len: int

    def __post_init__(self) -> None:
        if self.text_len < 0:
            raise OffsetOutOfBoundsError(f"text_len {self.text_len} is negative")
        prev_end = None
        for span in self.spans:
            if span.end > self.text_len:
                raise OffsetOutOfBoundsError(
                    f"span ({span.start}, {span.end}) exceeds text length {self.text_len}"
                )
            if prev_end is not None and span.start <= prev_end:
                raise ValueError(
                    f"spans not normalized: ({span.start}, {span.end}) "
                    f"starts at or before previous end {prev_end}"
                )
            prev_end = span.end

    def __iter__(self) -> Iterator[CharSpan]:
        return iter(self.spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __bool__(self) -> bool:
        return bool(self.spans)

    @property
    def covered(self) -> int:
        """Total number of covered characters."""
        return sum(len(s) for s in self.spans)

    def to_char_mask(self) -> np.ndarray:
        """Boolean coverage vector of length ``text_len``."""
        mask = np.zeros(self.text_len, dtype=bool)
        for span in self.spans:
            mask[span.start:span.end] = True
        return mask

    def as_pairs(self) -> list[list[int]]:
        """``[[start, end], ...]`` form used by the JSONL formats."""
        return [[s.start, s.end] for s in self.spans]

    @classmethod
    def empty(cls, text_len: int) -> SpanSet:
        return cls(spans=(), text_len=text_len)


def normalize(spans: Iterable[CharSpan], text_len: int) -> SpanSet:
    """Sort, merge overlapping or touching spans, and validate bounds.

    Coverage is preserved exactly: the result's mask equals the OR of the
    input spans' masks. Idempotent.
    """
    ordered = sorted(spans)
    merged: list[CharSpan] = []
    for span in ordered:
        if span.end > text_len:
            raise OffsetOutOfBoundsError(
                f"span ({span.start}, {span.end}) exceeds text length {text_len}"
            )
        if merged and span.start <= merged[-1].end:
            last = merged[-1]
            if span.end > last.end:
                merged[-1] = CharSpan(last.start, span.end)
        else:
            merged.append(span)
    return SpanSet(spans=tuple(merged), text_len=text_len)


def from_char_mask(mask: np.ndarray) -> SpanSet:
    """Run-length encode a boolean coverage vector into a SpanSet."""
    mask = np.asarray(mask, dtype=bool)
    spans: list[CharSpan] = []
    start = None
    for i, covered in enumerate(mask):
        if covered and start is None:
            start = i
        elif not covered and start is not None:
            spans.append(CharSpan(start, i))
            start = None
    if start is not None:
        spans.append(CharSpan(start, len(mask)))
    return SpanSet(spans=tuple(spans), text_len=len(mask))


def _require_same_length(a: SpanSet, b: SpanSet) -> None:
    if a.text_len != b.text_len:
        raise LengthMismatchError(
            f"span sets over texts of different lengths: {a.text_len} vs {b.text_len}"
        )


def intersect_count(a: SpanSet, b: SpanSet) -> int:
    """Number of characters covered by both sets."""
    _require_same_length(a, b)
    total = 0
    bi = 0
    b_spans = b.spans
    for sa in a.spans:
        while bi < len(b_spans) and b_spans[bi].end <= sa.start:
            bi += 1
        j = bi
        while j < len(b_spans) and b_spans[j].start < sa.end:
            total += min(sa.end, b_spans[j].end) - max(sa.start, b_spans[j].start)
            if b_spans[j].end >= sa.end:
                break
            j += 1
    return total


def union_count(a: SpanSet, b: SpanSet) -> int:
    """Number of characters covered by either set (inclusion-exclusion)."""
    _require_same_length(a, b)
    return a.covered + b.covered - intersect_count(a, b)
