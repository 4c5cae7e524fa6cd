"""Maps detector output back onto character spans of the original answer.

Three routes, one per detection variant: exact substring location for
extracted texts, a word-level minimum edit distance against a corrected
answer, and LLM-assisted excerpt location for false facts. All spans are
half-open character offsets into the unmodified answer.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .detectors import Extraction
from .llm import LlmBackend, LlmRequest, complete_json
from .prompts import load_prompt
from .spans import CharSpan, SoftSpan, SpanSet, normalize

log = logging.getLogger(__name__)

__all__ = [
    "MapResult",
    "map_substring",
    "AlignOp",
    "WordAlignment",
    "align_tokens",
    "align_words",
    "map_edit_distance",
    "fact_to_span_request",
    "map_facts_to_spans",
    "tokenize_with_spans",
]

_TOKEN_RE = re.compile(r"\S+")

# Above this mean token length the text is treated as unsegmented (no
# useful whitespace structure, e.g. zh) and alignment runs per character.
CHAR_FALLBACK_AVG_TOKEN_LEN = 8.0


@dataclass(frozen=True)
class MapResult:
    """Mapped spans plus their soft counterparts and any per-item warnings."""

    spans: SpanSet
    soft: tuple[SoftSpan, ...]
    warnings: tuple[str, ...] = ()


def tokenize_with_spans(text: str) -> list[tuple[str, int, int]]:
    """Unicode-whitespace tokens with their half-open character spans."""
    return [(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def map_substring(answer: str, extracted: Sequence[Extraction]) -> MapResult:
    """Locate each extracted text as an exact substring of the answer.

    The scan resumes after the previous match, so repeated texts bind to
    successive occurrences and out-of-order or absent texts are skipped
    with a warning rather than matched backwards.
    """
    matched: list[tuple[CharSpan, float]] = []
    warnings: list[str] = []
    cursor = 0
    for item in extracted:
        if not item.text:
            warnings.append("empty extracted text skipped")
            continue
        start = answer.find(item.text, cursor)
        if start < 0:
            warnings.append(
                f"extracted text not found after offset {cursor}: {item.text!r}"
            )
            continue
        span = CharSpan(start, start + len(item.text))
        matched.append((span, item.prob))
        cursor = span.end
    soft = []
    for span, prob in matched:
        if prob <= 0.0:
            # A zero-confidence flag carries no soft signal; the hard span
            # still stands since the model named the text.
            log.warning("dropping zero-probability soft span for %r",
                        answer[span.start:span.end])
            continue
        soft.append(SoftSpan(span=span, prob=prob))
    return MapResult(
        spans=normalize((s for s, _ in matched), len(answer)),
        soft=tuple(soft),
        warnings=tuple(warnings),
    )


@dataclass(frozen=True, slots=True)
class AlignOp:
    op: Literal["keep", "substitute", "delete", "insert"]
    orig: int | None
    corr: int | None


@dataclass(frozen=True)
class WordAlignment:
    ops: tuple[AlignOp, ...]
    cost: int
    token_spans: tuple[tuple[int, int], ...]
    char_level: bool

    def flagged_original_tokens(self) -> list[int]:
        return sorted(op.orig for op in self.ops
                      if op.op in ("delete", "substitute"))

    def replay(self, orig_tokens: Sequence[str], corr_tokens: Sequence[str]) -> list[str]:
        """Apply the ops to the original tokens; must equal the corrected ones."""
        out: list[str] = []
        for op in self.ops:
            if op.op == "keep":
                out.append(orig_tokens[op.orig])
            elif op.op in ("substitute", "insert"):
                out.append(corr_tokens[op.corr])
        return out


def align_tokens(orig: Sequence[str], corr: Sequence[str]) -> tuple[int, list[AlignOp]]:
    """Minimum edit distance under unit costs, with a fixed tie-break.

    Backtracking prefers Substitute over Delete over Insert over Keep, which
    both collapses delete+insert pairs into substitutions and pushes edits
    toward the end of the sequence (rightmost) among equal-cost alignments.
    """
    n, m = len(orig), len(corr)
    dp = np.zeros((n + 1, m + 1), dtype=np.int64)
    dp[:, 0] = np.arange(n + 1)
    dp[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = dp[i - 1, j - 1] + (0 if orig[i - 1] == corr[j - 1] else 1)
            dp[i, j] = min(diag, dp[i - 1, j] + 1, dp[i, j - 1] + 1)

    ops: list[AlignOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dp[i, j]
        if i > 0 and j > 0 and orig[i - 1] != corr[j - 1] \
                and dp[i - 1, j - 1] + 1 == here:
            ops.append(AlignOp("substitute", i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dp[i - 1, j] + 1 == here:
            ops.append(AlignOp("delete", i - 1, None))
            i -= 1
        elif j > 0 and dp[i, j - 1] + 1 == here:
            ops.append(AlignOp("insert", None, j - 1))
            j -= 1
        else:
            ops.append(AlignOp("keep", i - 1, j - 1))
            i, j = i - 1, j - 1
    ops.reverse()
    return int(dp[n, m]), ops


def _char_tokens(text: str) -> list[tuple[str, int, int]]:
    return [(ch, k, k + 1) for k, ch in enumerate(text)]


def _use_char_alignment(text: str) -> bool:
    tokens = _TOKEN_RE.findall(text)
    if not tokens:
        return False
    mean_len = sum(len(t) for t in tokens) / len(tokens)
    return mean_len > CHAR_FALLBACK_AVG_TOKEN_LEN


def align_words(original: str, corrected: str) -> WordAlignment:
    """Tokenize both strings the same way and align them.

    Splits on Unicode whitespace; unsegmented text (mean token length over
    the threshold, judged on the original) falls back to per-character
    alignment so the method still localizes edits.
    """
    char_level = _use_char_alignment(original)
    if char_level:
        orig_toks = _char_tokens(original)
        corr_toks = _char_tokens(corrected)
    else:
        orig_toks = tokenize_with_spans(original)
        corr_toks = tokenize_with_spans(corrected)
    cost, ops = align_tokens([t for t, _, _ in orig_toks],
                             [t for t, _, _ in corr_toks])
    return WordAlignment(
        ops=tuple(ops),
        cost=cost,
        token_spans=tuple((s, e) for _, s, e in orig_toks),
        char_level=char_level,
    )


def map_edit_distance(original: str, corrected: str) -> SpanSet:
    """Span union of original words the alignment deletes or substitutes.

    Runs of consecutively flagged words merge into one span, including the
    whitespace between them. Pure insertions have no original-side span and
    contribute nothing.
    """
    alignment = align_words(original, corrected)
    flagged = alignment.flagged_original_tokens()
    spans: list[CharSpan] = []
    run_start: int | None = None
    prev: int | None = None
    for idx in flagged + [None]:
        if prev is not None and idx != prev + 1:
            spans.append(CharSpan(alignment.token_spans[run_start][0],
                                  alignment.token_spans[prev][1]))
            run_start = None
        if idx is None:
            break
        if run_start is None:
            run_start = idx
        prev = idx
    return normalize(spans, len(original))


def _locate_excerpt(answer: str, excerpt: str) -> CharSpan | None:
    if not excerpt:
        return None
    start = answer.find(excerpt)
    if start < 0:
        return None
    return CharSpan(start, start + len(excerpt))


_EXCERPT_SCHEMA = '{"excerpts": [{"fact": "...", "excerpt": "..."}]}'


def fact_to_span_request(answer: str, false_facts: Sequence[str]) -> LlmRequest:
    prompt = load_prompt("fact_to_span")
    facts_block = "\n".join(f"{k}. {fact}" for k, fact in enumerate(false_facts, 1))
    return LlmRequest(system="", user=prompt.render(answer=answer, facts=facts_block))


def _validate_excerpts(value) -> list[tuple[str, str]]:
    if not isinstance(value, dict) or not isinstance(value.get("excerpts"), list):
        raise ValueError('expected an object with an "excerpts" array')
    out = []
    for entry in value["excerpts"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("excerpt"), str):
            raise ValueError("each entry needs a string excerpt field")
        out.append((str(entry.get("fact", "")), entry["excerpt"]))
    return out


def map_facts_to_spans(answer: str, false_facts: Sequence[str],
                       llm: LlmBackend) -> MapResult:
    """Ask the model for the verbatim excerpt expressing each false fact.

    Excerpts that are not character-for-character substrings of the answer
    are dropped with a warning; this mapper is the least reliable of the
    three precisely because models paraphrase here.
    """
    if not false_facts:
        raise ValueError("no false facts to map")
    pairs, _, _ = complete_json(
        llm, fact_to_span_request(answer, false_facts),
        schema_hint=_EXCERPT_SCHEMA,
        validate=_validate_excerpts,
    )
    spans: list[CharSpan] = []
    warnings: list[str] = []
    for fact, excerpt in pairs:
        span = _locate_excerpt(answer, excerpt)
        if span is None:
            warnings.append(
                f"excerpt is not a verbatim answer substring: {excerpt!r}"
                + (f" (fact: {fact!r})" if fact else "")
            )
            continue
        spans.append(span)
    merged = normalize(spans, len(answer))
    soft = tuple(SoftSpan(span=s, prob=1.0) for s in merged)
    return MapResult(spans=merged, soft=soft, warnings=tuple(warnings))


def audit_record(result: MapResult) -> str:
    """Warnings serialized for the error sidecar."""
    return json.dumps({"warnings": list(result.warnings)}, ensure_ascii=False)
