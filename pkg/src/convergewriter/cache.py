"""Content-addressed response cache.

Entries live in a flat directory as ``<digest>.json`` holding the canonical
request, the response body and a timestamp.  Writes go through a temporary
file and ``os.replace`` so concurrent writers of the same key never leave a
torn file; identical keys carry identical values, so last writer wins.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from pathlib import Path
from typing import Any


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def cache_key(provider_id: str, endpoint: str, request: Any) -> str:
    payload = canonical_json({"provider": provider_id, "endpoint": endpoint, "request": request})
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class MemoryCache:
    def __init__(self) -> None:
        self._entries: dict[str, Any] = {}
        self._lock = threading.Lock()

    def get(self, digest: str) -> Any | None:
        with self._lock:
            return self._entries.get(digest)

    def put(self, digest: str, request: Any, response: Any) -> None:
        with self._lock:
            self._entries[digest] = response

    def __len__(self) -> int:
        return len(self._entries)


class DiskCache:
    def __init__(self, directory: str | os.PathLike) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> Any | None:
        path = self._path(digest)
        try:
            with path.open(encoding="utf-8") as fh:
                return json.load(fh)["response"]
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, KeyError):
            # a damaged entry is a miss; it gets rewritten on the next put
            return None

    def put(self, digest: str, request: Any, response: Any) -> None:
        entry = {"request": request, "response": response, "timestamp": time.time()}
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(entry, fh, ensure_ascii=False)
        os.replace(tmp, self._path(digest))

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.json"))
