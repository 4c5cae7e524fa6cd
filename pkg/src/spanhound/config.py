"""Declarative run configuration.

One YAML file drives a run: language, context mode, detector, backend
descriptors, cache location, parallelism, seed. Secrets never appear in
the file; the config names the environment variable that holds the key.
The loaded object also knows which subset of itself belongs in the run
manifest (everything that shapes the output, nothing that does not).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

__all__ = ["LlmConfig", "SearchConfig", "RunConfig", "load_config"]

CONTEXT_MODES = ("none", "from_question", "from_claims")
DETECTORS = ("direct", "kg", "min_revision")
MAPPERS = ("substring", "edit_distance", "fact_to_span")

# Table-style pairing of detection strategy to span mapper.
DEFAULT_PAIRING = {
    "direct": "substring",
    "kg": "fact_to_span",
    "min_revision": "edit_distance",
}

# Overrides that still type-check against the detector's output variant.
ALLOWED_MAPPERS = {
    "direct": ("substring", "fact_to_span"),
    "kg": ("fact_to_span",),
    "min_revision": ("edit_distance",),
}


@dataclass(frozen=True)
class LlmConfig:
    kind: str = "mock"                 # mock | http
    model: str = "mock-model"
    endpoint: str | None = None
    api_key_env: str = "OPENAI_API_KEY"
    fixtures_dir: str | None = None

    def validate(self, label: str) -> None:
        if self.kind == "http":
            if not self.endpoint:
                raise ConfigError(f"{label}: http backend needs an endpoint")
        elif self.kind == "mock":
            if not self.fixtures_dir:
                raise ConfigError(f"{label}: mock backend needs a fixtures_dir")
        else:
            raise ConfigError(f"{label}: unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class SearchConfig:
    kind: str = "mock"                 # mock | http
    name: str = "mock-search"
    endpoint: str | None = None
    fixtures_dir: str | None = None
    top_k: int = 3

    def validate(self, label: str) -> None:
        if self.kind == "http":
            if not self.endpoint:
                raise ConfigError(f"{label}: http backend needs an endpoint")
        elif self.kind == "mock":
            if not self.fixtures_dir:
                raise ConfigError(f"{label}: mock backend needs a fixtures_dir")
        else:
            raise ConfigError(f"{label}: unknown backend kind {self.kind!r}")
        if self.top_k < 1:
            raise ConfigError(f"{label}: top_k must be at least 1")


@dataclass(frozen=True)
class RunConfig:
    language: str = "en"
    context_mode: str = "from_question"
    translate: bool = False
    detector: str = "direct"
    mapper: str | None = None          # None = detector's default pairing
    llm: LlmConfig = field(default_factory=LlmConfig)
    search: SearchConfig | None = field(default_factory=SearchConfig)
    translation_llm: LlmConfig | None = None
    cache_dir: str = ".spanhound_cache"
    parallelism: int = 1
    seed: int = 0
    retries: int = 2                   # attempts after a backend outage

    def effective_mapper(self) -> str:
        return self.mapper or DEFAULT_PAIRING[self.detector]

    def validate(self) -> None:
        if self.context_mode not in CONTEXT_MODES:
            raise ConfigError(
                f"unknown context_mode {self.context_mode!r}; "
                f"expected one of {CONTEXT_MODES}"
            )
        if self.detector not in DETECTORS:
            raise ConfigError(
                f"unknown detector {self.detector!r}; expected one of {DETECTORS}"
            )
        if self.detector == "kg" and self.context_mode == "none":
            raise ConfigError(
                "detector 'kg' verifies facts against retrieved passages and "
                "cannot run with context_mode 'none'"
            )
        if self.mapper is not None:
            if self.mapper not in MAPPERS:
                raise ConfigError(
                    f"unknown mapper {self.mapper!r}; expected one of {MAPPERS}"
                )
            if self.mapper not in ALLOWED_MAPPERS[self.detector]:
                raise ConfigError(
                    f"mapper {self.mapper!r} cannot consume detector "
                    f"{self.detector!r} output; allowed: "
                    f"{ALLOWED_MAPPERS[self.detector]}"
                )
        self.llm.validate("llm")
        if self.translation_llm is not None:
            self.translation_llm.validate("translation_llm")
        if self.context_mode != "none":
            if self.search is None:
                raise ConfigError(
                    f"context_mode {self.context_mode!r} needs a search backend"
                )
            self.search.validate("search")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.retries < 0:
            raise ConfigError("retries must not be negative")

    def to_manifest_dict(self) -> dict:
        """The config subset that determines the run's output.

        Parallelism and local cache location change scheduling and cost,
        never bytes, so they stay out of the manifest on purpose: the same
        logical run must produce the same manifest at any worker count.
        """
        def backend(cfg: LlmConfig | SearchConfig | None) -> dict | None:
            if cfg is None:
                return None
            d = {"kind": cfg.kind}
            if isinstance(cfg, LlmConfig):
                d["model"] = cfg.model
            else:
                d["name"] = cfg.name
                d["top_k"] = cfg.top_k
            if cfg.endpoint:
                d["endpoint"] = cfg.endpoint
            return d

        return {
            "language": self.language,
            "context_mode": self.context_mode,
            "translate": self.translate,
            "detector": self.detector,
            "mapper": self.effective_mapper(),
            "llm": backend(self.llm),
            "search": backend(self.search),
            "translation_llm": backend(self.translation_llm),
            "seed": self.seed,
        }


def _llm_config(raw: dict, label: str) -> LlmConfig:
    try:
        return LlmConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{label}: {exc}") from exc


def _search_config(raw: dict) -> SearchConfig:
    try:
        return SearchConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"search: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a YAML run config."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")

    known = {
        "language", "context_mode", "translate", "detector", "mapper",
        "llm", "search", "translation_llm", "cache_dir", "parallelism",
        "seed", "retries",
    }
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")

    kwargs = dict(raw)
    if "llm" in kwargs and isinstance(kwargs["llm"], dict):
        kwargs["llm"] = _llm_config(kwargs["llm"], "llm")
    if "translation_llm" in kwargs and isinstance(kwargs["translation_llm"], dict):
        kwargs["translation_llm"] = _llm_config(kwargs["translation_llm"],
                                                "translation_llm")
    if "search" in kwargs:
        if kwargs["search"] is None:
            pass
        elif isinstance(kwargs["search"], dict):
            kwargs["search"] = _search_config(kwargs["search"])
        else:
            raise ConfigError("search must be a mapping or null")
    try:
        config = RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    config.validate()
    return config
