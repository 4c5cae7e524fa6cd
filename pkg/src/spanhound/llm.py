"""LLM backends behind one call contract: (system, user, params) -> text.

The HTTP backend speaks the OpenAI-compatible chat-completions protocol.
The mock backend replays canned responses from a fixture directory keyed
by a content hash of the full request (provider, model, system, user,
params) and raises on unknown keys, which keeps every detector a
deterministic function of its inputs under test.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol, TypeVar

import requests

from .cache import ResponseCache, request_key
from .errors import BackendUnavailableError, FixtureMissingError, LlmParseError

log = logging.getLogger(__name__)

__all__ = [
    "LlmRequest",
    "LlmBackend",
    "OpenAiChatBackend",
    "MockLlmBackend",
    "CachedLlm",
    "extract_json",
    "complete_json",
    "repair_request",
]

# Paper-silent decoding default: greedy, so runs are reproducible.
DEFAULT_PARAMS: dict[str, Any] = {"temperature": 0.0}


@dataclass(frozen=True)
class LlmRequest:
    system: str
    user: str
    params: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_PARAMS))

    def payload(self) -> dict:
        return {"system": self.system, "user": self.user, "params": self.params}


class LlmBackend(Protocol):
    @property
    def identity(self) -> tuple[str, str]:
        """(provider tag, model name)."""
        ...

    def complete(self, request: LlmRequest) -> str: ...


def llm_request_key(backend: LlmBackend, request: LlmRequest) -> str:
    provider, model = backend.identity
    return request_key(provider, model, request.payload())


class OpenAiChatBackend:
    """Chat-completions client for any OpenAI-compatible endpoint."""

    def __init__(self, endpoint: str, model: str,
                 api_key_env: str = "OPENAI_API_KEY", timeout: float = 120.0):
        self.endpoint = endpoint
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout

    @property
    def identity(self) -> tuple[str, str]:
        return ("openai-compatible", self.model)

    def complete(self, request: LlmRequest) -> str:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.user})
        body = {"model": self.model, "messages": messages, **request.params}
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            resp = requests.post(self.endpoint, json=body, headers=headers,
                                 timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"LLM endpoint unreachable: {exc}") from exc
        if resp.status_code >= 500:
            raise BackendUnavailableError(
                f"LLM endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        if resp.status_code != 200:
            raise LlmParseError(
                f"LLM endpoint returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as exc:
            raise LlmParseError(f"malformed completion response: {exc}") from exc


class MockLlmBackend:
    """Replays canned responses from ``fixtures_dir/<request hash>.txt``."""

    def __init__(self, fixtures_dir: str | Path, model: str = "mock-model"):
        self.fixtures_dir = Path(fixtures_dir)
        self.model = model
        self.calls = 0

    @property
    def identity(self) -> tuple[str, str]:
        return ("mock", self.model)

    def _path(self, request: LlmRequest) -> Path:
        return self.fixtures_dir / f"{llm_request_key(self, request)}.txt"

    def complete(self, request: LlmRequest) -> str:
        self.calls += 1
        path = self._path(request)
        if not path.exists():
            raise FixtureMissingError(
                f"no canned LLM response for request hash {path.stem} "
                f"(system={request.system[:60]!r}..., user={request.user[:60]!r}...)"
            )
        return path.read_text(encoding="utf-8")

    def seed(self, request: LlmRequest, response: str) -> Path:
        """Write a canned response for ``request``; returns the fixture path."""
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        path = self._path(request)
        path.write_text(response, encoding="utf-8")
        return path


class CachedLlm:
    """Wrap a backend with a content-addressed response cache."""

    def __init__(self, backend: LlmBackend, cache: ResponseCache):
        self.backend = backend
        self.cache = cache

    @property
    def identity(self) -> tuple[str, str]:
        return self.backend.identity

    def complete(self, request: LlmRequest) -> str:
        key = llm_request_key(self.backend, request)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        text = self.backend.complete(request)
        provider, model = self.backend.identity
        self.cache.put(key, text, meta={"provider": provider, "model": model})
        return text


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)

T = TypeVar("T")


def extract_json(text: str) -> Any:
    """Pull the first JSON value out of a model reply.

    Tries the whole reply, then fenced code blocks, then a raw decode from
    the first brace or bracket. Raises ValueError if nothing parses.
    """
    stripped = text.strip()
    try:
        return json.loads(stripped)
    except json.JSONDecodeError:
        pass
    for fenced in _FENCE_RE.findall(text):
        try:
            return json.loads(fenced.strip())
        except json.JSONDecodeError:
            continue
    decoder = json.JSONDecoder()
    for i, ch in enumerate(text):
        if ch in "{[":
            try:
                value, _ = decoder.raw_decode(text[i:])
                return value
            except json.JSONDecodeError:
                continue
    raise ValueError("no parseable JSON value in model reply")


def repair_request(request: LlmRequest, bad_reply: str, schema_hint: str) -> LlmRequest:
    """The one follow-up sent when a reply fails to parse as JSON."""
    user = (
        "Your previous reply could not be parsed.\n\n"
        "Previous reply:\n"
        f"{bad_reply}\n\n"
        "Reply again with only valid JSON matching this schema:\n"
        f"{schema_hint}"
    )
    return LlmRequest(system=request.system, user=user, params=request.params)


def complete_json(llm: LlmBackend, request: LlmRequest, *, schema_hint: str,
                  validate: Callable[[Any], T]) -> tuple[T, str, int]:
    """Call the backend and parse+validate JSON, with one repair retry.

    The retry re-prompts with the malformed output and the schema. Returns
    (validated value, raw reply it came from, retries used). Raises
    LlmParseError if the repaired reply still fails.
    """
    raw = llm.complete(request)
    try:
        return validate(extract_json(raw)), raw, 0
    except ValueError as first_exc:
        log.debug("JSON parse failed, retrying once: %s", first_exc)
    repaired = llm.complete(repair_request(request, raw, schema_hint))
    try:
        return validate(extract_json(repaired)), repaired, 1
    except ValueError as exc:
        raise LlmParseError(f"unparseable model output after repair retry: {exc}",
                            raw=repaired) from exc
