"""The three detection strategies.

Each consumes the instance plus (optionally) a retrieved context bundle and
returns a Detection whose variant carries what that strategy found: texts
judged incorrect, facts judged false, or a minimally revised answer. The
raw model output is kept on every Detection for audit, and each strategy is
a deterministic function of its inputs under the mock backend.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyResultError, MissingTagError
from .llm import LlmBackend, LlmRequest, complete_json
from .prompts import load_prompt
from .retrieval import ContextBundle, extract_claims

log = logging.getLogger(__name__)

__all__ = [
    "Extraction",
    "ExtractedSpans",
    "FalseFacts",
    "CorrectedAnswer",
    "Detection",
    "Demo",
    "direct_request",
    "detect_direct",
    "Triple",
    "KnowledgeGraph",
    "kg_build_request",
    "kg_verify_request",
    "build_kg",
    "detect_kg",
    "min_revision_request",
    "min_revision_retry_request",
    "detect_min_revision",
]


@dataclass(frozen=True, slots=True)
class Extraction:
    """One answer text the model judged incorrect, with its confidence."""

    text: str
    prob: float


@dataclass(frozen=True)
class ExtractedSpans:
    items: tuple[Extraction, ...]


@dataclass(frozen=True)
class FalseFacts:
    facts: tuple[str, ...]


@dataclass(frozen=True)
class CorrectedAnswer:
    text: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("corrected answer must be nonempty")


@dataclass(frozen=True)
class Detection:
    detector: str
    variant: ExtractedSpans | FalseFacts | CorrectedAnswer
    raw: str
    retries: int = 0


@dataclass(frozen=True)
class Demo:
    """A worked example injected into the extraction prompt."""

    instance_id: str
    question: str
    answer: str
    context_digest: str
    gold_spans: tuple[tuple[int, int], ...]

    def expected_output(self) -> str:
        spans = [
            {"text": self.answer[s:e], "probability": 1.0}
            for s, e in self.gold_spans
        ]
        return json.dumps({"incorrect_spans": spans}, ensure_ascii=False)


def _render_demos(demos: Sequence[Demo]) -> str:
    blocks = []
    for demo in demos:
        blocks.append(
            "**Input**:\n"
            f"<context>\n{demo.context_digest}\n</context>\n\n"
            f"<question>\n{demo.question}\n</question>\n\n"
            f"<answer>\n{demo.answer}\n</answer>\n\n"
            "**Output**:\n"
            f"```json\n{demo.expected_output()}\n```"
        )
    return "# Demonstrations\n" + "\n\n".join(blocks)


_EXTRACTION_SCHEMA = '{"incorrect_spans": [{"text": "...", "probability": 0.0}]}'


def _validate_extractions(value) -> list[Extraction]:
    if not isinstance(value, dict) or not isinstance(value.get("incorrect_spans"), list):
        raise ValueError('expected an object with an "incorrect_spans" array')
    items: list[Extraction] = []
    for entry in value["incorrect_spans"]:
        if not isinstance(entry, dict) or not isinstance(entry.get("text"), str):
            raise ValueError("each incorrect span needs a string text field")
        text = entry["text"]
        if not text:
            log.warning("dropping extraction with empty text")
            continue
        try:
            prob = float(entry.get("probability", 1.0))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"non-numeric probability: {entry.get('probability')!r}") from exc
        if not 0.0 <= prob <= 1.0:
            log.warning("clamping out-of-range probability %s for %r", prob, text)
            prob = min(1.0, max(0.0, prob))
        items.append(Extraction(text=text, prob=prob))
    return items


def direct_request(ctx: ContextBundle | None, inst, *,
                   instruction: str | None = None,
                   demos: Sequence[Demo] = ()) -> LlmRequest:
    """The exact request detect_direct sends, for seeding mock fixtures."""
    if ctx is not None:
        system = instruction if instruction is not None else load_prompt("direct_extraction").text
        user = load_prompt("user_payload").render(
            context=ctx.as_text(), question=inst.question, answer=inst.answer,
        )
    else:
        system = instruction if instruction is not None else load_prompt("direct_extraction_nocontext").text
        user = load_prompt("user_payload_nocontext").render(
            question=inst.question, answer=inst.answer,
        )
    if demos:
        system = system + "\n\n" + _render_demos(demos)
    return LlmRequest(system=system, user=user)


def detect_direct(ctx: ContextBundle | None, inst, llm: LlmBackend, *,
                  instruction: str | None = None,
                  demos: Sequence[Demo] = ()) -> Detection:
    """Extract incorrect texts straight from the answer, context-grounded.

    ``instruction`` replaces the stock system prompt (the prompt-search
    hook); ``demos`` are appended to it as worked examples. With no context
    bundle the context-free prompt variant is used.
    """
    items, raw, retries = complete_json(
        llm, direct_request(ctx, inst, instruction=instruction, demos=demos),
        schema_hint=_EXTRACTION_SCHEMA,
        validate=_validate_extractions,
    )
    return Detection(detector="direct", variant=ExtractedSpans(tuple(items)),
                     raw=raw, retries=retries)


@dataclass(frozen=True, slots=True)
class Triple:
    subject: str
    relation: str
    obj: str
    passage_index: int

    def render(self) -> str:
        return f"({self.subject}, {self.relation}, {self.obj})"


@dataclass(frozen=True)
class KnowledgeGraph:
    triples: tuple[Triple, ...]
    raw_outputs: tuple[str, ...]

    def triples_for(self, fact: str) -> list[Triple]:
        """Triples whose subject or object is mentioned in the fact text."""
        lowered = fact.lower()
        return [
            t for t in self.triples
            if t.subject.lower() in lowered or t.obj.lower() in lowered
        ]


_TRIPLES_SCHEMA = '[{"subject": "...", "relation": "...", "object": "..."}]'


def _validate_triples(value) -> list[tuple[str, str, str]]:
    if not isinstance(value, list):
        raise ValueError("expected a JSON array of triples")
    out = []
    for entry in value:
        if not isinstance(entry, dict):
            raise ValueError("each triple must be an object")
        try:
            out.append((str(entry["subject"]), str(entry["relation"]),
                        str(entry["object"])))
        except KeyError as exc:
            raise ValueError(f"triple missing field {exc}") from exc
    return out


def kg_build_request(passage_text: str) -> LlmRequest:
    prompt = load_prompt("kg_build")
    return LlmRequest(system="", user=prompt.render(passage=passage_text))


def build_kg(ctx: ContextBundle, llm: LlmBackend) -> KnowledgeGraph:
    """Parse every passage into (subject, relation, object) triples.

    Duplicate triples across passages collapse to the first occurrence so
    each fact is checked once.
    """
    if not ctx.passages:
        raise EmptyResultError("cannot build a knowledge graph without passages")
    seen: set[tuple[str, str, str]] = set()
    triples: list[Triple] = []
    raws: list[str] = []
    for index, passage in enumerate(ctx.passages):
        parsed, raw, _ = complete_json(
            llm, kg_build_request(passage.text),
            schema_hint=_TRIPLES_SCHEMA,
            validate=_validate_triples,
        )
        raws.append(raw)
        for subject, relation, obj in parsed:
            key = (subject, relation, obj)
            if key not in seen:
                seen.add(key)
                triples.append(Triple(subject, relation, obj, index))
    return KnowledgeGraph(triples=tuple(triples), raw_outputs=tuple(raws))


_VERDICTS = ("supported", "contradicted", "unsupported")


def _validate_verdict(value) -> str:
    if not isinstance(value, dict) or value.get("verdict") not in _VERDICTS:
        raise ValueError(f'expected {{"verdict": one of {_VERDICTS}}}')
    return value["verdict"]


def kg_verify_request(fact: str, triples: Sequence[Triple]) -> LlmRequest:
    rendered = "\n".join(t.render() for t in triples)
    prompt = load_prompt("kg_verify")
    return LlmRequest(system="", user=prompt.render(fact=fact, triples=rendered))


def detect_kg(ctx: ContextBundle, inst, llm: LlmBackend, *,
              kg: KnowledgeGraph | None = None) -> Detection:
    """Verify each answer fact against the context's knowledge graph.

    Facts whose entities never appear in the graph are flagged unsupported
    rather than silently passed; only explicitly supported facts survive.
    """
    if kg is None:
        kg = build_kg(ctx, llm)
    facts = extract_claims(inst, llm)
    audit = [json.dumps({"step": "kg_build", "raw": r}, ensure_ascii=False)
             for r in kg.raw_outputs]
    flagged: list[str] = []
    retries = 0
    for fact in facts:
        relevant = kg.triples_for(fact)
        if not relevant:
            verdict = "unsupported"
            audit.append(json.dumps(
                {"step": "verify", "fact": fact, "verdict": verdict,
                 "note": "no graph entity matched"},
                ensure_ascii=False))
        else:
            verdict, raw, used = complete_json(
                llm, kg_verify_request(fact, relevant),
                schema_hint='{"verdict": "supported"}',
                validate=_validate_verdict,
            )
            retries += used
            audit.append(json.dumps(
                {"step": "verify", "fact": fact, "verdict": verdict, "raw": raw},
                ensure_ascii=False))
        if verdict != "supported":
            flagged.append(fact)
    return Detection(detector="kg", variant=FalseFacts(tuple(flagged)),
                     raw="\n".join(audit), retries=retries)


_CORRECTED_RE = re.compile(r"<corrected_answer>(.*?)</corrected_answer>", re.DOTALL)


def _pull_corrected(reply: str) -> str | None:
    match = _CORRECTED_RE.search(reply)
    if match is None:
        return None
    text = match.group(1).strip()
    return text or None


def min_revision_request(ctx: ContextBundle | None, inst) -> LlmRequest:
    prompt = load_prompt("min_revision")
    user = prompt.render(
        context=ctx.as_text() if ctx is not None else "",
        question=inst.question,
        answer=inst.answer,
    )
    return LlmRequest(system="", user=user)


def min_revision_retry_request(prev_reply: str) -> LlmRequest:
    user = (
        "Your previous reply did not contain a <corrected_answer> tag.\n\n"
        "Previous reply:\n"
        f"{prev_reply}\n\n"
        "Reply again with the corrected answer wrapped in "
        "<corrected_answer></corrected_answer> tags."
    )
    return LlmRequest(system="", user=user)


def detect_min_revision(ctx: ContextBundle | None, inst, llm: LlmBackend) -> Detection:
    """Ask for the answer corrected with the fewest possible changes."""
    if not inst.answer:
        raise EmptyResultError(f"instance {inst.instance_id!r} has an empty answer")
    reply = llm.complete(min_revision_request(ctx, inst))
    corrected = _pull_corrected(reply)
    retries = 0
    if corrected is None:
        reply = llm.complete(min_revision_retry_request(reply))
        corrected = _pull_corrected(reply)
        retries = 1
        if corrected is None:
            raise MissingTagError(
                "no <corrected_answer> tag after one retry", raw=reply,
            )
    return Detection(detector="min_revision", variant=CorrectedAnswer(corrected),
                     raw=reply, retries=retries)
