"""Wires retrieval, detection, and mapping into corpus runs.

One instance flows retrieve -> detect -> map; failures along the way
degrade that instance to an empty prediction with an error record instead
of aborting the corpus. Runs are instance-parallel and, under mock
backends, byte-deterministic: the manifest captures everything that shaped
the output and nothing that did not (worker count, cache temperature).
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, TypeVar

from ._version import __version__
from .cache import ResponseCache
from .config import RunConfig
from .data import FieldMap, Instance, Prediction, instance_record
from .detectors import (
    Demo,
    detect_direct,
    detect_kg,
    detect_min_revision,
)
from .errors import BackendUnavailableError, EmptyResultError, SpanhoundError
from .llm import CachedLlm, LlmBackend, LlmRequest, MockLlmBackend, OpenAiChatBackend
from .mapping import map_edit_distance, map_facts_to_spans, map_substring
from .prompts import prompt_versions
from .retrieval import ContextBundle, context_from_claims, context_from_question
from .search import (
    CachedSearch,
    HttpSearchBackend,
    MockSearchBackend,
    Passage,
    SearchBackend,
)
from .spans import SoftSpan, SpanSet

log = logging.getLogger(__name__)

__all__ = [
    "Backends",
    "InstanceResult",
    "CorpusResult",
    "build_backends",
    "run_instance",
    "process_corpus",
    "empty_prediction",
    "optimizer_runner",
]

# Seconds between retries after a backend outage; tests zero this out.
RETRY_SLEEP = 0.5

T = TypeVar("T")


class CountingLlm:
    """Counts logical completion requests, independent of cache state."""

    def __init__(self, inner: LlmBackend):
        self.inner = inner
        self._count = 0
        self._lock = threading.Lock()

    @property
    def identity(self) -> tuple[str, str]:
        return self.inner.identity

    @property
    def requests(self) -> int:
        return self._count

    def complete(self, request: LlmRequest) -> str:
        with self._lock:
            self._count += 1
        return self.inner.complete(request)


class CountingSearch:
    """Counts logical search requests, independent of cache state."""

    def __init__(self, inner: SearchBackend):
        self.inner = inner
        self._count = 0
        self._lock = threading.Lock()

    @property
    def identity(self) -> tuple[str, str]:
        return self.inner.identity

    @property
    def requests(self) -> int:
        return self._count

    def search(self, query: str, top_k: int) -> list[Passage]:
        with self._lock:
            self._count += 1
        return self.inner.search(query, top_k)


@dataclass
class Backends:
    llm: CountingLlm
    search: CountingSearch | None
    translator: CountingLlm
    cache: ResponseCache


def build_backends(config: RunConfig) -> Backends:
    cache = ResponseCache(config.cache_dir)

    def make_llm(cfg) -> CountingLlm:
        if cfg.kind == "mock":
            base: LlmBackend = MockLlmBackend(cfg.fixtures_dir, model=cfg.model)
        else:
            base = OpenAiChatBackend(cfg.endpoint, cfg.model,
                                     api_key_env=cfg.api_key_env)
        return CountingLlm(CachedLlm(base, cache))

    llm = make_llm(config.llm)
    translator = make_llm(config.translation_llm) if config.translation_llm else llm

    search = None
    if config.context_mode != "none" and config.search is not None:
        if config.search.kind == "mock":
            base_search: SearchBackend = MockSearchBackend(
                config.search.fixtures_dir, name=config.search.name)
        else:
            base_search = HttpSearchBackend(config.search.endpoint,
                                            name=config.search.name)
        search = CountingSearch(CachedSearch(base_search, cache))
    return Backends(llm=llm, search=search, translator=translator, cache=cache)


def _with_retries(fn: Callable[[], T], attempts: int) -> T:
    for attempt in range(attempts + 1):
        try:
            return fn()
        except BackendUnavailableError as exc:
            if attempt == attempts:
                raise
            log.warning("backend unavailable (%s), retry %d of %d",
                        exc, attempt + 1, attempts)
            time.sleep(RETRY_SLEEP)
    raise AssertionError("unreachable")


def empty_prediction(inst: Instance) -> Prediction:
    return Prediction(instance_id=inst.instance_id,
                      hard=SpanSet.empty(len(inst.answer)), soft=())


@dataclass
class InstanceResult:
    prediction: Prediction
    error: str | None = None
    warnings: tuple[str, ...] = ()


def _retrieve(inst: Instance, config: RunConfig, backends: Backends) -> ContextBundle:
    if config.context_mode == "from_question":
        return context_from_question(
            inst, backends.search, llm=backends.translator,
            translate=config.translate, top_k=config.search.top_k,
        )
    return context_from_claims(
        inst, backends.search, backends.llm,
        translate=config.translate, top_k=config.search.top_k,
        translator=backends.translator,
    )


def _detect_and_map(ctx: ContextBundle | None, inst: Instance, config: RunConfig,
                    backends: Backends) -> tuple[Prediction, tuple[str, ...]]:
    llm = backends.llm
    mapper = config.effective_mapper()
    if config.detector == "direct":
        detection = detect_direct(ctx, inst, llm)
        items = detection.variant.items
        if mapper == "fact_to_span":
            if not items:
                return empty_prediction(inst), ()
            result = map_facts_to_spans(inst.answer, [i.text for i in items], llm)
        else:
            result = map_substring(inst.answer, items)
        pred = Prediction(inst.instance_id, result.spans, result.soft)
        return pred, result.warnings
    if config.detector == "kg":
        detection = detect_kg(ctx, inst, llm)
        facts = detection.variant.facts
        if not facts:
            return empty_prediction(inst), ()
        result = map_facts_to_spans(inst.answer, list(facts), llm)
        pred = Prediction(inst.instance_id, result.spans, result.soft)
        return pred, result.warnings
    detection = detect_min_revision(ctx, inst, llm)
    spans = map_edit_distance(inst.answer, detection.variant.text)
    soft = tuple(SoftSpan(span=s, prob=1.0) for s in spans)
    return Prediction(inst.instance_id, spans, soft), ()


def run_instance(inst: Instance, config: RunConfig,
                 backends: Backends) -> InstanceResult:
    """Run one instance end to end, degrading failures to an empty row.

    A context that cannot be retrieved drops the instance to context-free
    detection, except for the kg detector, which has nothing to verify
    against and records a failure instead.
    """
    try:
        ctx: ContextBundle | None = None
        if config.context_mode != "none":
            try:
                ctx = _with_retries(lambda: _retrieve(inst, config, backends),
                                    config.retries)
            except EmptyResultError as exc:
                if config.detector == "kg":
                    raise
                log.warning("instance %s: %s; detecting context-free",
                            inst.instance_id, exc)
        pred, warnings = _with_retries(
            lambda: _detect_and_map(ctx, inst, config, backends), config.retries)
        return InstanceResult(prediction=pred, warnings=warnings)
    except SpanhoundError as exc:
        log.error("instance %s failed: %s", inst.instance_id, exc)
        return InstanceResult(
            prediction=empty_prediction(inst),
            error=f"{type(exc).__name__}: {exc}",
        )


@dataclass
class CorpusResult:
    predictions: list[Prediction]
    errors: list[dict]
    manifest: dict

    @property
    def failures(self) -> int:
        return len(self.errors)


def corpus_digest(instances: Sequence[Instance],
                  fields: FieldMap = FieldMap()) -> str:
    payload = "\n".join(
        json.dumps(instance_record(inst, fields), sort_keys=True,
                   ensure_ascii=False)
        for inst in instances
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_manifest(config: RunConfig, backends: Backends,
                   instances: Sequence[Instance], failures: int) -> dict:
    return {
        "backends": {
            "llm": list(backends.llm.identity),
            "search": list(backends.search.identity) if backends.search else None,
            "translator": list(backends.translator.identity),
        },
        "config": config.to_manifest_dict(),
        "counts": {
            "instances": len(instances),
            "failures": failures,
            "llm_requests": backends.llm.requests
            + (backends.translator.requests
               if backends.translator is not backends.llm else 0),
            "search_requests": backends.search.requests if backends.search else 0,
        },
        "input_digest": corpus_digest(instances),
        "prompts": prompt_versions(),
        "tool": {"name": "spanhound", "version": __version__},
    }


def process_corpus(instances: Sequence[Instance], config: RunConfig,
                   backends: Backends) -> CorpusResult:
    """Run every instance, in input order, and assemble the run manifest."""
    def worker(inst: Instance) -> InstanceResult:
        return run_instance(inst, config, backends)

    if config.parallelism > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(worker, instances))
    else:
        results = [worker(inst) for inst in instances]

    errors = []
    for inst, result in zip(instances, results):
        if result.error is not None:
            errors.append({"id": inst.instance_id, "detector": config.detector,
                           "error": result.error})
        elif result.warnings:
            log.info("instance %s warnings: %s", inst.instance_id,
                     "; ".join(result.warnings))
    manifest = build_manifest(config, backends, instances, failures=len(errors))
    return CorpusResult(
        predictions=[r.prediction for r in results],
        errors=errors,
        manifest=manifest,
    )


def optimizer_runner(config: RunConfig, backends: Backends):
    """The detect-and-map path as a prompt-search runner.

    Only the direct extraction detector takes instruction and demo
    overrides, so the optimizer always drives that strategy; failed
    instances score as empty predictions rather than crashing the search.
    """
    def runner(fold_instances: Sequence[Instance], instruction: str,
               demos: Sequence[Demo]) -> list[Prediction]:
        preds: list[Prediction] = []
        for inst in fold_instances:
            try:
                ctx: ContextBundle | None = None
                if config.context_mode != "none":
                    try:
                        ctx = _with_retries(
                            lambda: _retrieve(inst, config, backends),
                            config.retries)
                    except EmptyResultError:
                        ctx = None
                detection = detect_direct(ctx, inst, backends.llm,
                                          instruction=instruction, demos=demos)
                result = map_substring(inst.answer, detection.variant.items)
                preds.append(Prediction(inst.instance_id, result.spans,
                                        result.soft))
            except SpanhoundError as exc:
                log.warning("candidate evaluation failed on %s: %s",
                            inst.instance_id, exc)
                preds.append(empty_prediction(inst))
        return preds
    return runner
