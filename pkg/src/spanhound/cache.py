"""Content-addressed response cache for search and LLM backends.

Entries are keyed by a hash of (backend id, model, request payload) and
stored one file per entry. Writes go through a temp file followed by an
atomic rename, so concurrent writers cannot interleave; last writer wins.
Corrupt entries are ignored and refetched, never fatal.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from pathlib import Path

log = logging.getLogger(__name__)

__all__ = ["ResponseCache", "request_key"]


def request_key(backend_id: str, model: str, payload) -> str:
    """Stable content hash of one backend request."""
    blob = json.dumps(
        {"backend": backend_id, "model": model, "payload": payload},
        sort_keys=True, ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """File-per-entry cache rooted at ``cache_dir``; hits bypass the network."""

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0

    def _entry_path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def get(self, key: str):
        """Return the cached payload, or None on miss or corrupt entry."""
        path = self._entry_path(key)
        if not path.exists():
            self.misses += 1
            return None
        try:
            with open(path, encoding="utf-8") as fh:
                entry = json.load(fh)
            payload = entry["payload"]
        except (json.JSONDecodeError, KeyError, OSError) as exc:
            log.warning("corrupt cache entry %s ignored: %s", path.name, exc)
            self.misses += 1
            return None
        self.hits += 1
        return payload

    def put(self, key: str, payload, meta: dict | None = None) -> None:
        entry = {
            "payload": payload,
            "stored_at": time.time(),
            "meta": meta or {},
        }
        path = self._entry_path(key)
        # pid alone is not unique under thread-pool writers sharing a process
        tmp = path.with_name(
            path.name + f".tmp.{os.getpid()}.{threading.get_ident()}")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False)
        os.replace(tmp, path)

    def stats(self) -> dict:
        entries = list(self.cache_dir.glob("*.json"))
        return {
            "dir": str(self.cache_dir),
            "entries": len(entries),
            "bytes": sum(p.stat().st_size for p in entries),
            "hits": self.hits,
            "misses": self.misses,
        }

    def clear(self) -> int:
        """Delete all entries; returns how many were removed."""
        removed = 0
        for p in self.cache_dir.glob("*.json"):
            p.unlink(missing_ok=True)
            removed += 1
        return removed
