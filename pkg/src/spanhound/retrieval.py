"""Builds the verification context for an instance.

Two modes: query the search backend with the question itself, or decompose
the answer into claims and run one query per claim. Either path can route
its queries through a translation step first. The output is a ContextBundle
whose passages feed the detectors.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Literal

from .errors import EmptyResultError
from .llm import LlmBackend, LlmRequest, complete_json
from .prompts import load_prompt
from .search import Passage, SearchBackend

log = logging.getLogger(__name__)

__all__ = [
    "ContextBundle",
    "translation_request",
    "translate_to_english",
    "claim_request",
    "context_from_question",
    "extract_claims",
    "context_from_claims",
]

DEFAULT_TOP_K = 3


@dataclass(frozen=True)
class ContextBundle:
    instance_id: str
    mode: Literal["from_question", "from_claims"]
    queries: tuple[str, ...]
    passages: tuple[Passage, ...]
    translated: bool = False

    def __post_init__(self) -> None:
        if not self.passages:
            raise EmptyResultError(
                f"context bundle for {self.instance_id!r} has no passages"
            )

    def as_text(self) -> str:
        """Passages joined for prompt interpolation, ordered as retrieved."""
        return "\n\n".join(p.text for p in self.passages)


def translation_request(text: str) -> LlmRequest:
    prompt = load_prompt("translation")
    return LlmRequest(system="", user=prompt.render(text=text))


def translate_to_english(text: str, llm: LlmBackend) -> str:
    return llm.complete(translation_request(text)).strip()


def context_from_question(inst, backend: SearchBackend, *,
                          llm: LlmBackend | None = None,
                          translate: bool = False,
                          top_k: int = DEFAULT_TOP_K) -> ContextBundle:
    """One search call with the question as the query."""
    if not inst.question:
        raise EmptyResultError(f"instance {inst.instance_id!r} has an empty question")
    query = inst.question
    if translate:
        if llm is None:
            raise ValueError("translate=True requires an LLM backend")
        query = translate_to_english(query, llm)
    passages = backend.search(query, top_k)
    return ContextBundle(
        instance_id=inst.instance_id,
        mode="from_question",
        queries=(query,),
        passages=tuple(passages),
        translated=translate,
    )


def _validate_claims(value) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(c, str) for c in value):
        raise ValueError("expected a JSON array of claim strings")
    return [c.strip() for c in value if c.strip()]


def claim_request(inst) -> LlmRequest:
    prompt = load_prompt("claim_extraction")
    return LlmRequest(
        system="",
        user=prompt.render(question=inst.question, answer=inst.answer),
    )


def extract_claims(inst, llm: LlmBackend) -> list[str]:
    """Decompose the answer into self-contained declarative claims."""
    if not inst.answer:
        raise EmptyResultError(f"instance {inst.instance_id!r} has an empty answer")
    claims, _, _ = complete_json(
        llm, claim_request(inst),
        schema_hint='["first claim", "second claim"]',
        validate=_validate_claims,
    )
    return claims


def context_from_claims(inst, backend: SearchBackend, llm: LlmBackend, *,
                        translate: bool = False,
                        top_k: int = DEFAULT_TOP_K,
                        max_workers: int = 1,
                        translator: LlmBackend | None = None) -> ContextBundle:
    """One query per extracted claim; passages deduplicated by exact text.

    Zero claims (a contentless answer) falls back to the question-mode
    bundle so the pipeline always has some context to hand the detector.
    ``translator`` routes translation through a different backend than the
    claim decomposition; it defaults to ``llm``.
    """
    translator = translator or llm
    claims = extract_claims(inst, llm)
    if not claims:
        log.info("instance %s yielded no claims, falling back to question mode",
                 inst.instance_id)
        return context_from_question(inst, backend, llm=translator,
                                     translate=translate, top_k=top_k)
    queries = claims
    if translate:
        queries = [translate_to_english(c, translator) for c in claims]

    def run_query(q: str) -> list[Passage]:
        try:
            return backend.search(q, top_k)
        except EmptyResultError:
            return []

    if max_workers > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            per_query = list(pool.map(run_query, queries))
    else:
        per_query = [run_query(q) for q in queries]

    # Union in query order, dropping exact-text duplicates across claims.
    seen: set[str] = set()
    passages: list[Passage] = []
    for batch in per_query:
        for p in batch:
            if p.text not in seen:
                seen.add(p.text)
                passages.append(p)
    if not passages:
        raise EmptyResultError(
            f"no passages for any claim of instance {inst.instance_id!r}"
        )
    return ContextBundle(
        instance_id=inst.instance_id,
        mode="from_claims",
        queries=tuple(queries),
        passages=tuple(passages),
        translated=translate,
    )
