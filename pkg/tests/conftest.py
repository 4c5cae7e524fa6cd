"""Shared fixtures: a fully seeded mock workspace for end-to-end runs.

The golden workspace holds a 12-instance corpus, canned search passages,
and canned LLM replies keyed by the exact requests the pipeline sends.
Requests are built with the library's own request builders, so fixture
keys can never drift from the code under test.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import pytest

from spanhound.data import Instance, read_jsonl
from spanhound.detectors import direct_request
from spanhound.llm import MockLlmBackend
from spanhound.retrieval import ContextBundle
from spanhound.search import MockSearchBackend, Passage

N_INSTANCES = 12


def passage_for(index: int) -> Passage:
    return Passage(
        title=f"About Landia{index}",
        text=(f"Goodcity{index}, the capital city of Landia{index}, has been "
              f"the seat of its government since 1905."),
        url=f"https://reference.example/landia{index}",
    )


def corpus_records(n: int = N_INSTANCES) -> list[dict]:
    """Synthetic instances; odd indices carry one hallucinated city name."""
    records = []
    for i in range(n):
        question = f"What is the capital of Landia{i}?"
        if i % 2 == 1:
            city = f"Müllerstadt{i}" if i == 11 else f"Badcity{i}"
            answer = f"The capital of Landia{i} is {city}."
            start = answer.index(city)
            hard = [[start, start + len(city)]]
            soft = [{"start": start, "end": start + len(city), "prob": 1.0}]
            annotations = [
                [[start, start + len(city)]],
                [[start, len(answer)]],   # second annotator includes the period
            ]
        else:
            answer = f"The capital of Landia{i} is Goodcity{i}."
            hard = []
            soft = []
            annotations = [[], []]
        records.append({
            "id": f"inst-{i:02d}",
            "lang": "en",
            "model_input": question,
            "model_output_text": answer,
            "model_id": "synth-llm-7b",
            "hard_labels": hard,
            "soft_labels": soft,
            "annotations": annotations,
            "audit_note": f"synthetic case {i}",
        })
    return records


def write_corpus(path: Path, records: list[dict]) -> None:
    path.write_text(
        "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records),
        encoding="utf-8",
    )


def question_bundle(inst: Instance, passages: tuple[Passage, ...]) -> ContextBundle:
    """The bundle the pipeline builds in from_question mode."""
    return ContextBundle(
        instance_id=inst.instance_id,
        mode="from_question",
        queries=(inst.question,),
        passages=passages,
    )


def extraction_reply(items: list[tuple[str, float]]) -> str:
    return json.dumps({
        "incorrect_spans": [{"text": t, "probability": p} for t, p in items]
    }, ensure_ascii=False)


@dataclass
class GoldenWorkspace:
    root: Path
    config_path: Path
    input_path: Path
    instances: list[Instance]
    llm: MockLlmBackend
    search: MockSearchBackend
    cache_dir: Path

    def out_dir(self, name: str) -> Path:
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path


def build_golden_workspace(root: Path, n: int = N_INSTANCES) -> GoldenWorkspace:
    root.mkdir(parents=True, exist_ok=True)
    input_path = root / "input.jsonl"
    write_corpus(input_path, corpus_records(n))
    instances = read_jsonl(input_path)

    llm = MockLlmBackend(root / "fixtures" / "llm")
    search = MockSearchBackend(root / "fixtures" / "search")
    for i, inst in enumerate(instances):
        passage = passage_for(i)
        search.seed(inst.question, 3, [passage])
        ctx = question_bundle(inst, (passage,))
        if i % 2 == 1:
            city = f"Müllerstadt{i}" if i == 11 else f"Badcity{i}"
            reply = extraction_reply([(city, 0.9)])
        else:
            reply = extraction_reply([])
        llm.seed(direct_request(ctx, inst), reply)

    cache_dir = root / "cache"
    config_path = root / "run.yaml"
    config_path.write_text(
        "language: en\n"
        "context_mode: from_question\n"
        "translate: false\n"
        "detector: direct\n"
        "llm:\n"
        "  kind: mock\n"
        "  model: mock-model\n"
        f"  fixtures_dir: {llm.fixtures_dir}\n"
        "search:\n"
        "  kind: mock\n"
        "  name: mock-search\n"
        f"  fixtures_dir: {search.fixtures_dir}\n"
        "  top_k: 3\n"
        f"cache_dir: {cache_dir}\n"
        "parallelism: 1\n"
        "seed: 7\n",
        encoding="utf-8",
    )
    return GoldenWorkspace(
        root=root,
        config_path=config_path,
        input_path=input_path,
        instances=instances,
        llm=llm,
        search=search,
        cache_dir=cache_dir,
    )


@pytest.fixture
def golden(tmp_path: Path) -> GoldenWorkspace:
    return build_golden_workspace(tmp_path / "golden")


@pytest.fixture
def mock_llm(tmp_path: Path) -> MockLlmBackend:
    return MockLlmBackend(tmp_path / "llm_fixtures")


@pytest.fixture
def mock_search(tmp_path: Path) -> MockSearchBackend:
    return MockSearchBackend(tmp_path / "search_fixtures")


def make_instance(instance_id: str = "inst-x", question: str = "Q?",
                  answer: str = "A.", **kwargs) -> Instance:
    return Instance(instance_id=instance_id, lang="en", question=question,
                    answer=answer, **kwargs)


# Acceptance tests register one verdict per criterion here; the summary
# hook below prints them after the run, outside pytest's output capture.
ACCEPTANCE_RESULTS: dict[int, tuple[str, str]] = {}


def record_criterion(number: int, description: str, outcome: str) -> None:
    ACCEPTANCE_RESULTS[number] = (description, outcome)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        description, outcome = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(
            f"[{outcome}] criterion {number}: {description}")
