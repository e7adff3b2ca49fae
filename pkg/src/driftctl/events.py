"""Append-only JSON-lines event log with replayable, digestable history."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterator


def canonical_json(obj: Any) -> str:
    """Stable serialization: sorted keys, no whitespace variance."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


class EventLog:
    """Ordered audit trail of everything the control plane does.

    Every entry is a self-describing JSON object with a logical timestamp,
    a kind tag and a payload.  Entries are never rewritten; the log can be
    replayed to reconstruct service status and diffed across runs via its
    content digest.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self.entries: list[dict] = []
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self.entries.append(json.loads(line))

    def append(self, kind: str, t_ms: int, **payload: Any) -> dict:
        entry = {"schema_version": 1, "t_ms": int(t_ms), "kind": kind, **payload}
        self.entries.append(entry)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(canonical_json(entry) + "\n")
        return entry

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[dict]:
        return iter(self.entries)

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.entries if e["kind"] == kind]

    def digest(self) -> str:
        """SHA-256 over the canonical line encoding of all entries."""
        h = hashlib.sha256()
        for entry in self.entries:
            h.update(canonical_json(entry).encode("utf-8"))
            h.update(b"\n")

        return h.hexdigest()
