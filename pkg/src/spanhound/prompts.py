"""Versioned prompt template assets.

Templates live as package data named ``<name>.v<version>.txt``; the loader
picks the highest version unless one is pinned. Rendering substitutes
``{placeholder}`` tokens by literal replacement, so JSON braces inside the
templates never need escaping.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources

__all__ = ["PromptTemplate", "load_prompt", "prompt_versions", "render"]

_ASSET_RE = re.compile(r"^(?P<name>[a-z0-9_]+)\.v(?P<version>\d+)\.txt$")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    version: int
    text: str

    def render(self, **subs: str) -> str:
        return render(self.text, **subs)


def render(template: str, **subs: str) -> str:
    out = template
    for key, value in subs.items():
        out = out.replace("{" + key + "}", value)
    return out


def _asset_index() -> dict[str, dict[int, str]]:
    index: dict[str, dict[int, str]] = {}
    root = resources.files(__package__) / "templates"
    for entry in root.iterdir():
        m = _ASSET_RE.match(entry.name)
        if m:
            index.setdefault(m["name"], {})[int(m["version"])] = entry.name
    return index


def load_prompt(name: str, version: int | None = None) -> PromptTemplate:
    """Load a template by name, defaulting to its latest version."""
    index = _asset_index()
    if name not in index:
        raise KeyError(f"unknown prompt template {name!r}")
    versions = index[name]
    chosen = max(versions) if version is None else version
    if chosen not in versions:
        raise KeyError(f"prompt template {name!r} has no version {chosen}")
    root = resources.files(__package__) / "templates"
    text = (root / versions[chosen]).read_text(encoding="utf-8")
    return PromptTemplate(name=name, version=chosen, text=text)


def prompt_versions() -> dict[str, int]:
    """Latest version of every shipped template, for run manifests."""
    return {name: max(versions) for name, versions in sorted(_asset_index().items())}
