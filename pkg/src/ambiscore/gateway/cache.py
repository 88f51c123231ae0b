"""Content-addressed response cache, one JSON file per entry."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .._util import atomic_write_text, canonical_json, sha256_hex

log = logging.getLogger(__name__)


def cache_key(kind: str, model_id: str, payload: Any) -> str:
    """64-hex digest over the endpoint kind, model id, and canonical request."""
    return sha256_hex(kind.encode() + b"\x00" + model_id.encode("utf-8") + b"\x00" + canonical_json(payload))


@dataclass(frozen=True)
class CacheEntry:
    key: str
    kind: str
    model_id: str
    request: str
    response: Any
    created_at: str
    provenance: str

    def to_dict(self) -> dict:
        return self.__dict__.copy()


class ResponseCache:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.json"

    def get(self, key: str, request: str | None = None) -> CacheEntry | None:
        p = self.path_for(key)
        try:
            doc = json.loads(p.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (OSError, json.JSONDecodeError) as exc:
            log.warning("unreadable cache entry %s: %s", p, exc)
            return None
        if doc.get("key") != key or (request is not None and doc.get("request") != request):
            log.warning("cache entry %s does not match its request; ignoring", p)
            return None
        return CacheEntry(**doc)

    def put(self, kind: str, model_id: str, payload: Any, response: Any, provenance: str) -> CacheEntry:
        key = cache_key(kind, model_id, payload)
        entry = CacheEntry(
            key=key,
            kind=kind,
            model_id=model_id,
            request=canonical_json(payload).decode("utf-8"),
            response=response,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            provenance=provenance,
        )
        atomic_write_text(self.path_for(key), json.dumps(entry.to_dict(), sort_keys=True, ensure_ascii=False))
        return entry

    def __len__(self) -> int:
        return sum(1 for _ in self.root.glob("*/*.json"))
