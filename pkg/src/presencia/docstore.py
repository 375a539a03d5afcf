"""File-backed document store with per-collection append-only logs.

Each collection keeps a snapshot plus a log of full-document "put"
records. A record on disk is `u32 length | payload | u32 crc32`, all
little-endian, payload being canonical JSON (sorted keys, compact
separators). Every mutation is fsynced before it is acknowledged.

Opening a store replays the snapshot then the log, drops a torn record at
the log tail (a crash mid-append), rewrites a compacted snapshot, and
truncates the log. A checksum failure anywhere except the tail raises
CorruptInterior: that data was acknowledged and must not be silently
dropped.

A single re-entrant lock serializes all operations; increments are
read-modify-write under that lock, which makes them atomic across
threads.
"""

from __future__ import annotations

import json
import os
import struct
import threading
import zlib
from pathlib import Path

COLLECTIONS = ("persons", "sessions", "attendance", "models")

_SCHEMAS: dict[str, dict[str, tuple[type, ...]]] = {
    "persons": {
        "person_id": (str,),
        "name": (str,),
        "sample_count": (int,),
        "status": (str,),
    },
    "sessions": {
        "session_id": (str,),
        "name": (str,),
        "state": (str,),
        "started_at": (str,),
        "ended_at": (str, type(None)),
        "debounce_s": (int, type(None)),
        "events_total": (int,),
    },
    "attendance": {
        "session_id": (str,),
        "person_id": (str,),
        "name": (str,),
        "count": (int,),
        "first_seen": (str,),
        "last_seen": (str,),
    },
    "models": {},
}


class DocStoreError(Exception):
    pass


class DuplicateId(DocStoreError):
    pass


class NotFound(DocStoreError):
    pass


class TypeMismatch(DocStoreError):
    pass


class SchemaViolation(DocStoreError):
    pass


class CorruptInterior(DocStoreError):
    pass


class UnknownCollection(DocStoreError):
    pass


def canonical_json(body: dict) -> bytes:
    return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode(
        "utf-8"
    )


def _frame(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload + struct.pack("<I", zlib.crc32(payload))


def _read_frames(data: bytes, *, tolerate_torn_tail: bool) -> list[bytes]:
    """Parse length-prefixed checksummed records. A record that runs past
    the end of the buffer (or whose checksum fails right at the tail) is a
    torn append and is dropped when tolerated; anything else is interior
    corruption."""
    out = []
    pos = 0
    n = len(data)
    while pos < n:
        if pos + 4 > n:
            if tolerate_torn_tail:
                return out
            raise CorruptInterior("record length cut short")
        (length,) = struct.unpack_from("<I", data, pos)
        end = pos + 4 + length + 4
        if end > n:
            if tolerate_torn_tail:
                return out
            raise CorruptInterior("record payload cut short")
        payload = data[pos + 4 : pos + 4 + length]
        (crc,) = struct.unpack_from("<I", data, pos + 4 + length)
        if zlib.crc32(payload) != crc:
            if tolerate_torn_tail and end == n:
                return out
            raise CorruptInterior(f"checksum failure at offset {pos}")
        out.append(payload)
        pos = end
    return out


def _validate(coll: str, doc_id: str, body: dict) -> None:
    if coll not in COLLECTIONS:
        raise UnknownCollection(coll)
    if not isinstance(doc_id, str) or not doc_id:
        raise SchemaViolation("document id must be a nonempty string")
    schema = _SCHEMAS[coll]
    for field_name, kinds in schema.items():
        if field_name not in body:
            raise SchemaViolation(f"{coll} document missing field {field_name!r}")
        value = body[field_name]
        if isinstance(value, bool) and bool not in kinds:
            raise SchemaViolation(f"{coll}.{field_name} must not be boolean")
        if not isinstance(value, kinds):
            raise SchemaViolation(
                f"{coll}.{field_name} has type {type(value).__name__}, wants {kinds}"
            )


def _fsync_dir(path: Path) -> None:
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
    finally:
        os.close(fd)


class DocStore:
    """Open (or create) the store under `root`, recovering and compacting
    every collection."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._docs: dict[str, dict[str, dict]] = {c: {} for c in COLLECTIONS}
        self._logs: dict[str, object] = {}
        for coll in COLLECTIONS:
            self._recover(coll)
            self._compact(coll)

    # -- recovery and durability -------------------------------------------

    def _snap_path(self, coll: str) -> Path:
        return self.root / f"{coll}.snapshot"

    def _log_path(self, coll: str) -> Path:
        return self.root / f"{coll}.log"

    def _recover(self, coll: str) -> None:
        snap = self._snap_path(coll)
        if snap.exists():
            for payload in _read_frames(snap.read_bytes(), tolerate_torn_tail=False):
                rec = json.loads(payload.decode("utf-8"))
                self._docs[coll][rec["id"]] = rec["body"]
        log = self._log_path(coll)
        if log.exists():
            for payload in _read_frames(log.read_bytes(), tolerate_torn_tail=True):
                rec = json.loads(payload.decode("utf-8"))
                self._docs[coll][rec["id"]] = rec["body"]

    def _compact(self, coll: str) -> None:
        tmp = self._snap_path(coll).with_suffix(".snapshot.tmp")
        with open(tmp, "wb") as f:
            for doc_id in sorted(self._docs[coll]):
                payload = canonical_json({"id": doc_id, "body": self._docs[coll][doc_id]})
                f.write(_frame(payload))
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, self._snap_path(coll))
        _fsync_dir(self.root)
        log = open(self._log_path(coll), "wb")
        log.flush()
        os.fsync(log.fileno())
        self._logs[coll] = log

    def _append(self, coll: str, doc_id: str, body: dict) -> None:
        # called under the lock; durable before return
        payload = canonical_json({"id": doc_id, "body": body})
        log = self._logs[coll]
        log.write(_frame(payload))
        log.flush()
        os.fsync(log.fileno())
        self._docs[coll][doc_id] = body

    def close(self) -> None:
        with self._lock:
            for log in self._logs.values():
                log.close()
            self._logs = {}

    # -- operations ----------------------------------------------------------

    def insert(self, coll: str, doc_id: str, body: dict) -> str:
        _validate(coll, doc_id, body)
        with self._lock:
            if doc_id in self._docs[coll]:
                raise DuplicateId(f"{coll}/{doc_id} already exists")
            self._append(coll, doc_id, dict(body))
        return doc_id

    def get(self, coll: str, doc_id: str) -> dict | None:
        if coll not in COLLECTIONS:
            raise UnknownCollection(coll)
        with self._lock:
            body = self._docs[coll].get(doc_id)
            return None if body is None else json.loads(canonical_json(body))

    def update(self, coll: str, doc_id: str, body: dict) -> None:
        _validate(coll, doc_id, body)
        with self._lock:
            if doc_id not in self._docs[coll]:
                raise NotFound(f"{coll}/{doc_id}")
            self._append(coll, doc_id, dict(body))

    def increment(self, coll: str, doc_id: str, field_path: str, delta: int) -> int:
        """Atomic read-modify-write on an integer field (absent counts as
        0); returns the post-increment value."""
        if coll not in COLLECTIONS:
            raise UnknownCollection(coll)
        with self._lock:
            body = self._docs[coll].get(doc_id)
            if body is None:
                raise NotFound(f"{coll}/{doc_id}")
            node = body = json.loads(canonical_json(body))
            parts = field_path.split(".")
            for part in parts[:-1]:
                nxt = node.get(part)
                if nxt is None:
                    nxt = node[part] = {}
                if not isinstance(nxt, dict):
                    raise TypeMismatch(f"{field_path} crosses a non-map value")
                node = nxt
            leaf = parts[-1]
            current = node.get(leaf, 0)
            if isinstance(current, bool) or not isinstance(current, int):
                raise TypeMismatch(f"{field_path} is not an integer")
            node[leaf] = current + delta
            _validate(coll, doc_id, body)
            self._append(coll, doc_id, body)
            return node[leaf]

    def query(self, coll: str, predicate: dict | None = None) -> list[tuple[str, dict]]:
        """All documents whose body matches every (field == value) clause,
        ordered by id ascending."""
        if coll not in COLLECTIONS:
            raise UnknownCollection(coll)
        predicate = predicate or {}
        with self._lock:
            out = []
            for doc_id in sorted(self._docs[coll]):
                body = self._docs[coll][doc_id]
                if all(body.get(k) == v for k, v in predicate.items()):
                    out.append((doc_id, json.loads(canonical_json(body))))
            return out


def compact_and_recover(path: str | Path) -> DocStore:
    """Replay logs under `path` (dropping a torn tail), write compacted
    snapshots, and return the live store handle."""
    return DocStore(path)
