"""Budgeted random search over extraction prompts with 2-fold validation.

Candidates pair an LLM-proposed instruction rewrite with a seeded few-shot
demo subset. Each candidate is scored on both folds through an injected
runner (the full detect, map, score path); demos for a fold are always
drawn from the opposite fold. The whole run is recorded in a JSON trace
that is rewritten after every evaluation, so an interrupted search resumes
where it stopped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .data import Instance, Prediction
from .detectors import Demo
from .errors import ConfigError, MissingInstanceError
from .llm import LlmBackend, LlmRequest, complete_json
from .metrics import MetricReport, evaluate_corpus
from .prompts import load_prompt

log = logging.getLogger(__name__)

__all__ = [
    "PromptCandidate",
    "OptimizationRun",
    "OBJECTIVES",
    "fold_of",
    "rewrite_request",
    "propose_candidates",
    "optimize",
]

Runner = Callable[[Sequence[Instance], str, Sequence[Demo]], Sequence[Prediction]]

OBJECTIVES: dict[str, Callable[[MetricReport], float]] = {
    "iou": lambda r: r.mean_iou,
    "corr": lambda r: r.mean_corr,
    "max_iou": lambda r: r.mean_max_iou,
    "iou+corr": lambda r: (r.mean_iou + r.mean_corr) / 2.0,
}


def canonical_objective(name: str) -> str:
    key = name.strip().lower().replace(" ", "")
    if key == "maxiou":
        key = "max_iou"
    if key not in OBJECTIVES:
        raise ConfigError(
            f"unknown objective {name!r}; expected one of {sorted(OBJECTIVES)}"
        )
    return key


@dataclass(frozen=True)
class PromptCandidate:
    candidate_id: str
    instruction: str
    demo_subset: int | None

    @classmethod
    def build(cls, instruction: str, demo_subset: int | None) -> PromptCandidate:
        digest = hashlib.sha256(json.dumps(
            {"instruction": instruction, "demo_subset": demo_subset},
            sort_keys=True, ensure_ascii=False,
        ).encode("utf-8")).hexdigest()
        return cls(candidate_id=digest[:16], instruction=instruction,
                   demo_subset=demo_subset)


@dataclass
class OptimizationRun:
    objective: str
    budget: int
    folds: int
    trace: dict
    best: PromptCandidate | None
    best_score: float


def fold_of(instance_id: str) -> int:
    digest = hashlib.sha256(instance_id.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % 2


def _derived_rng(*parts) -> random.Random:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def rewrite_request(seed_prompt: str, k: int) -> LlmRequest:
    prompt = load_prompt("prompt_rewrite")
    return LlmRequest(system="", user=prompt.render(seed=seed_prompt, k=str(k)))


def _validate_rewrites(value) -> list[str]:
    if not isinstance(value, list) or not all(isinstance(s, str) for s in value):
        raise ValueError("expected a JSON array of instruction strings")
    rewrites = [s.strip() for s in value if s.strip()]
    if not rewrites:
        raise ValueError("no nonempty instructions in reply")
    return rewrites


def propose_candidates(seed_prompt: str, llm: LlmBackend, k: int, *,
                       demo_subsets: int = 0) -> list[PromptCandidate]:
    """Cross k instruction rewrites with the demo subset indices.

    Identical rewrites collapse before the cross product, so the candidate
    count is (distinct rewrites) x max(1, demo_subsets).
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    rewrites, _, _ = complete_json(
        llm, rewrite_request(seed_prompt, k),
        schema_hint='["instruction one", "instruction two"]',
        validate=_validate_rewrites,
    )
    distinct = list(dict.fromkeys(rewrites))
    subsets: list[int | None] = [None] if demo_subsets < 1 else list(range(demo_subsets))
    return [PromptCandidate.build(instruction, subset)
            for instruction in distinct for subset in subsets]


def _demo_ids_for(candidate: PromptCandidate, fold: int,
                  fold_ids: dict[int, list[str]], seed: int,
                  demos_per_subset: int) -> list[str]:
    if candidate.demo_subset is None:
        return []
    pool = sorted(fold_ids[1 - fold])
    size = min(demos_per_subset, len(pool))
    if size == 0:
        return []
    rng = _derived_rng(seed, candidate.demo_subset, fold)
    return rng.sample(pool, size)


def _build_demos(ids: Sequence[str], by_id: dict[str, Instance],
                 digest_fn: Callable[[Instance], str]) -> list[Demo]:
    demos = []
    for instance_id in ids:
        inst = by_id[instance_id]
        demos.append(Demo(
            instance_id=inst.instance_id,
            question=inst.question,
            answer=inst.answer,
            context_digest=digest_fn(inst),
            gold_spans=tuple((s, e) for s, e in inst.gold_hard.as_pairs()),
        ))
    return demos


def _write_trace(trace: dict, path: Path) -> None:
    tmp = path.with_suffix(f".tmp.{os.getpid()}")
    tmp.write_text(json.dumps(trace, sort_keys=True, indent=2, ensure_ascii=False)
                   + "\n", encoding="utf-8")
    os.replace(tmp, path)


def optimize(instances: Sequence[Instance], runner: Runner, *,
             objective: str, budget: int, llm: LlmBackend, seed_prompt: str,
             trace_path: str | Path, seed: int = 0, k: int = 4,
             demo_subsets: int = 0, demos_per_subset: int = 2,
             digest_fn: Callable[[Instance], str] | None = None,
             resume: bool = False) -> OptimizationRun:
    """Search the candidate pool under a budget and return the best prompt.

    One budget unit is one candidate scored on both folds. The trace at
    ``trace_path`` is rewritten after each candidate; with ``resume`` a
    matching existing trace's evaluations are reused instead of rerun.
    """
    objective = canonical_objective(objective)
    if budget < 1:
        raise ValueError("budget must be at least 1")
    for inst in instances:
        if inst.gold_hard is None or inst.gold_soft is None:
            raise MissingInstanceError(
                f"instance {inst.instance_id!r} lacks gold labels; "
                "the optimizer needs a labeled dataset"
            )
        if objective == "max_iou" and not inst.annotator_sets:
            raise ConfigError(
                "objective max_iou needs per-annotator label sets on every instance"
            )
    if digest_fn is None:
        digest_fn = lambda inst: "(context omitted)"  # noqa: E731

    by_id = {inst.instance_id: inst for inst in instances}
    fold_ids: dict[int, list[str]] = {0: [], 1: []}
    for inst in instances:
        fold_ids[fold_of(inst.instance_id)].append(inst.instance_id)

    candidates = propose_candidates(seed_prompt, llm, k, demo_subsets=demo_subsets)
    order = list(range(len(candidates)))
    random.Random(seed).shuffle(order)
    ordered = [candidates[i] for i in order]

    trace_path = Path(trace_path)
    trace: dict = {
        "objective": objective,
        "seed": seed,
        "budget": budget,
        "k": k,
        "demo_subsets": demo_subsets,
        "demos_per_subset": demos_per_subset,
        "seed_prompt_digest": hashlib.sha256(seed_prompt.encode("utf-8")).hexdigest(),
        "order": [c.candidate_id for c in ordered],
        "evaluations": [],
        "best": None,
    }
    if resume and trace_path.exists():
        previous = json.loads(trace_path.read_text(encoding="utf-8"))
        for key in ("objective", "seed", "seed_prompt_digest", "order"):
            if previous.get(key) != trace[key]:
                raise ConfigError(
                    f"existing trace does not match this run (field {key!r}); "
                    "remove it or rerun with the original settings"
                )
        trace["evaluations"] = previous.get("evaluations", [])
        trace["budget"] = max(budget, previous.get("budget", 0))
        log.info("resuming from %d recorded evaluations", len(trace["evaluations"]))

    done = {e["candidate_id"] for e in trace["evaluations"]}

    def record_best() -> tuple[PromptCandidate | None, float]:
        best_entry = None
        for entry in trace["evaluations"]:
            if best_entry is None or entry["mean"] > best_entry["mean"]:
                best_entry = entry
        if best_entry is None:
            return None, float("-inf")
        trace["best"] = {"candidate_id": best_entry["candidate_id"],
                         "mean": best_entry["mean"]}
        return (PromptCandidate(best_entry["candidate_id"],
                                best_entry["instruction"],
                                best_entry["demo_subset"]),
                best_entry["mean"])

    for candidate in ordered:
        if len(trace["evaluations"]) >= budget:
            break
        if candidate.candidate_id in done:
            continue
        fold_scores: dict[str, dict] = {}
        scores: list[float] = []
        for fold in (0, 1):
            eval_ids = fold_ids[fold]
            if not eval_ids:
                continue
            demo_ids = _demo_ids_for(candidate, fold, fold_ids, seed,
                                     demos_per_subset)
            leaked = set(demo_ids) & set(eval_ids)
            assert not leaked, f"demos leaked into their evaluation fold: {leaked}"
            demos = _build_demos(demo_ids, by_id, digest_fn)
            fold_insts = [by_id[i] for i in eval_ids]
            preds = runner(fold_insts, candidate.instruction, demos)
            report = evaluate_corpus(preds, fold_insts)
            score = float(OBJECTIVES[objective](report))
            scores.append(score)
            fold_scores[str(fold)] = {
                "score": score,
                "instances": len(eval_ids),
                "demo_ids": demo_ids,
            }
        mean = sum(scores) / len(scores) if scores else 0.0
        trace["evaluations"].append({
            "candidate_id": candidate.candidate_id,
            "instruction": candidate.instruction,
            "demo_subset": candidate.demo_subset,
            "folds": fold_scores,
            "mean": mean,
        })
        record_best()
        _write_trace(trace, trace_path)

    best, best_score = record_best()
    _write_trace(trace, trace_path)
    return OptimizationRun(objective=objective, budget=trace["budget"], folds=2,
                           trace=trace, best=best, best_score=best_score)
