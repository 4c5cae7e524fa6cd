"""Passage retrieval backends: live HTTP search and a fixture replay mock.

Both return a ranked list of Passage objects for a query string. The mock
is keyed by a content hash of (query, top_k) so tests and offline runs are
exact replays of a recorded session.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .cache import ResponseCache, request_key
from .errors import BackendUnavailableError, EmptyResultError, FixtureMissingError

__all__ = [
    "Passage",
    "SearchBackend",
    "HttpSearchBackend",
    "MockSearchBackend",
    "CachedSearch",
]


@dataclass(frozen=True, slots=True)
class Passage:
    title: str
    text: str
    url: str = ""

    def to_dict(self) -> dict:
        return {"title": self.title, "text": self.text, "url": self.url}

    @classmethod
    def from_dict(cls, d: dict) -> Passage:
        return cls(title=str(d.get("title", "")), text=str(d["text"]),
                   url=str(d.get("url", "")))


class SearchBackend(Protocol):
    @property
    def identity(self) -> tuple[str, str]: ...

    def search(self, query: str, top_k: int) -> list[Passage]: ...


def search_request_key(backend: SearchBackend, query: str, top_k: int) -> str:
    provider, name = backend.identity
    return request_key(provider, name, {"query": query, "top_k": top_k})


class HttpSearchBackend:
    """GET ``endpoint?q=...&k=...`` returning ``{"results": [{title,text,url}]}``."""

    def __init__(self, endpoint: str, name: str = "web", timeout: float = 30.0):
        self.endpoint = endpoint
        self.name = name
        self.timeout = timeout

    @property
    def identity(self) -> tuple[str, str]:
        return ("http-search", self.name)

    def search(self, query: str, top_k: int) -> list[Passage]:
        try:
            resp = requests.get(self.endpoint, params={"q": query, "k": top_k},
                                timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"search endpoint unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise BackendUnavailableError(
                f"search endpoint returned {resp.status_code}"
            )
        if resp.status_code != 200:
            raise EmptyResultError(f"search endpoint returned {resp.status_code}")
        try:
            results = resp.json()["results"]
        except (ValueError, KeyError) as exc:
            raise EmptyResultError(f"malformed search response: {exc}") from exc
        passages = [Passage.from_dict(r) for r in results[:top_k]]
        if not passages:
            raise EmptyResultError(f"no passages for query {query!r}")
        return passages


class MockSearchBackend:
    """Replays ranked passages from ``fixtures_dir/<request hash>.json``."""

    def __init__(self, fixtures_dir: str | Path, name: str = "mock-search"):
        self.fixtures_dir = Path(fixtures_dir)
        self.name = name
        self.calls = 0

    @property
    def identity(self) -> tuple[str, str]:
        return ("mock", self.name)

    def _path(self, query: str, top_k: int) -> Path:
        return self.fixtures_dir / f"{search_request_key(self, query, top_k)}.json"

    def search(self, query: str, top_k: int) -> list[Passage]:
        self.calls += 1
        path = self._path(query, top_k)
        if not path.exists():
            raise FixtureMissingError(
                f"no canned search results for query {query!r} (top_k={top_k}, "
                f"hash {path.stem})"
            )
        records = json.loads(path.read_text(encoding="utf-8"))
        passages = [Passage.from_dict(r) for r in records]
        if not passages:
            raise EmptyResultError(f"no passages for query {query!r}")
        return passages

    def seed(self, query: str, top_k: int, passages: list[Passage]) -> Path:
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        path = self._path(query, top_k)
        path.write_text(
            json.dumps([p.to_dict() for p in passages], ensure_ascii=False, indent=1),
            encoding="utf-8",
        )
        return path


class CachedSearch:
    """Wrap a search backend with the shared response cache."""

    def __init__(self, backend: SearchBackend, cache: ResponseCache):
        self.backend = backend
        self.cache = cache

    @property
    def identity(self) -> tuple[str, str]:
        return self.backend.identity

    def search(self, query: str, top_k: int) -> list[Passage]:
        key = search_request_key(self.backend, query, top_k)
        hit = self.cache.get(key)
        if hit is not None:
            return [Passage.from_dict(r) for r in json.loads(hit)]
        passages = self.backend.search(query, top_k)
        provider, name = self.backend.identity
        self.cache.put(key, json.dumps([p.to_dict() for p in passages],
                                       ensure_ascii=False),
                       meta={"provider": provider, "name": name})
        return passages
