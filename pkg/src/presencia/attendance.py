"""Session lifecycle, per-frame recognition, debounced counters, CSV export.

Timestamps always come from the caller (frame metadata), never from a
wall clock inside the pipeline, so any frame sequence replays to
bit-identical events and CSV bytes. A person's counter increments at most
once per debounce window within a session; presence is simply count >= 1.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .classifier import UNKNOWN, predict
from .docstore import DocStore
from .embedder import embed, preprocess, verify
from .haar import DetectParams, detect_multiscale, nms
from .imagecore import Image, Rect, as_gray
from .pipeline import ModelBundle

TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
CSV_HEADER = "person_id,name,count,first_seen_utc,last_seen_utc"


class AttendanceError(Exception):
    pass


class SessionNotFound(AttendanceError):
    pass


class SessionNotRunning(AttendanceError):
    pass


class NonMonotoneTimestamp(AttendanceError):
    pass


def parse_utc(text: str) -> datetime:
    dt = datetime.strptime(text, TIME_FORMAT)
    return dt.replace(tzinfo=timezone.utc)


def format_utc(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime(TIME_FORMAT)


def csv_field(value: str) -> str:
    if any(c in value for c in ',"\n'):
        return '"' + value.replace('"', '""') + '"'
    return value


@dataclass(frozen=True)
class RecognitionEvent:
    box: Rect
    person_id: str  # UNKNOWN when rejected
    top_prob: float
    timestamp: datetime
    marked: bool

    def to_json(self) -> dict:
        return {
            "box": {"x": self.box.x, "y": self.box.y, "w": self.box.w, "h": self.box.h},
            "person_id": self.person_id,
            "top_prob": self.top_prob,
            "timestamp": format_utc(self.timestamp),
            "marked": self.marked,
        }


class AttendanceEngine:
    """Recognition sessions over one docstore and one model bundle.

    Frames within a session are processed strictly sequentially (a lock
    per session enforces it); separate sessions may run concurrently.
    """

    def __init__(
        self,
        store: DocStore,
        data_root: Path,
        models: ModelBundle,
        detect_params: DetectParams | None = None,
        nms_iou: float = 0.3,
    ):
        self.store = store
        self.data_root = Path(data_root)
        self.models = models
        self.detect_params = detect_params or DetectParams()
        self.nms_iou = nms_iou
        self._locks: dict[str, threading.Lock] = {}
        self._last_ts: dict[str, datetime] = {}
        self._guard = threading.Lock()

    # -- session lifecycle ---------------------------------------------------

    def _session_lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def start_session(
        self, name: str, debounce_s: int | None = 30, started_at: datetime | None = None
    ) -> dict:
        """Create a running session. `debounce_s=None` means a person is
        counted at most once for the whole session."""
        if debounce_s is not None and debounce_s < 0:
            raise ValueError("debounce_s must be >= 0 or None")
        started = started_at or datetime.now(timezone.utc)
        with self._guard:
            session_id = f"sess-{len(self.store.query('sessions')) + 1:04d}"
            doc = {
                "session_id": session_id,
                "name": name,
                "state": "running",
                "started_at": format_utc(started),
                "ended_at": None,
                "debounce_s": debounce_s,
                "events_total": 0,
            }
            self.store.insert("sessions", session_id, doc)
            self._last_ts[session_id] = parse_utc(doc["started_at"])
        return doc

    def _running_session(self, session_id: str) -> dict:
        doc = self.store.get("sessions", session_id)
        if doc is None:
            raise SessionNotFound(session_id)
        if doc["state"] != "running":
            raise SessionNotRunning(f"{session_id} is {doc['state']}")
        return doc

    # -- per-frame recognition -------------------------------------------------

    def process_frame(
        self, session_id: str, frame: Image, timestamp: datetime
    ) -> list[RecognitionEvent]:
        with self._session_lock(session_id):
            session = self._running_session(session_id)
            last = self._last_ts.get(session_id)
            if last is not None and timestamp < last:
                raise NonMonotoneTimestamp(f"{timestamp} precedes {last}")
            self._last_ts[session_id] = timestamp

            detections = nms(
                detect_multiscale(as_gray(frame), self.models.cascade, self.detect_params),
                self.nms_iou,
            )
            events = []
            for det in detections:
                chip = preprocess(frame, det.box, chip_size=self.models.chip_size)
                embedding = embed(self.models.embedder, chip)
                pred = predict(self.models.head, embedding)
                person_id = pred.top_id
                if person_id != UNKNOWN and not self._verified(embedding, person_id):
                    person_id = UNKNOWN
                marked = False
                if person_id != UNKNOWN:
                    marked = self._mark(session, person_id, timestamp)
                events.append(
                    RecognitionEvent(
                        box=det.box,
                        person_id=person_id,
                        top_prob=pred.top_prob,
                        timestamp=timestamp,
                        marked=marked,
                    )
                )
            if events:
                self.store.increment("sessions", session_id, "events_total", len(events))
            return events

    def _verified(self, embedding, person_id: str) -> bool:
        """A named face must also verify (absolute distance under tau)
        against at least one of that person's enrolled samples; a softmax
        head alone is overconfident on faces it never saw."""
        gallery = self.models.gallery.get(person_id, [])
        return any(verify(embedding, ref, self.models.tau) for ref in gallery)

    def _mark(self, session: dict, person_id: str, timestamp: datetime) -> bool:
        """Debounced counter update; returns whether the count moved."""
        session_id = session["session_id"]
        record_id = f"{session_id}:{person_id}"
        now_text = format_utc(timestamp)
        existing = self.store.get("attendance", record_id)
        if existing is None:
            person = self.store.get("persons", person_id)
            name = person["name"] if person else person_id
            self.store.insert(
                "attendance",
                record_id,
                {
                    "session_id": session_id,
                    "person_id": person_id,
                    "name": name,
                    "count": 1,
                    "first_seen": now_text,
                    "last_seen": now_text,
                },
            )
            return True
        debounce = session["debounce_s"]
        elapsed = (timestamp - parse_utc(existing["last_seen"])).total_seconds()
        existing["last_seen"] = now_text
        if debounce is not None and elapsed >= debounce:
            self.store.update("attendance", record_id, existing)
            self.store.increment("attendance", record_id, "count", 1)
            return True
        self.store.update("attendance", record_id, existing)
        return False

    # -- session end and export -------------------------------------------------

    def end_session(self, session_id: str, ended_at: datetime | None = None) -> dict:
        with self._session_lock(session_id):
            session = self._running_session(session_id)
            ended = ended_at or self._last_ts.get(session_id) or datetime.now(timezone.utc)
            started = parse_utc(session["started_at"])
            if ended < started:
                ended = started
            session["state"] = "ended"
            session["ended_at"] = format_utc(ended)
            self.store.update("sessions", session_id, session)

            records = self.store.query("attendance", {"session_id": session_id})
            export_path = self.data_root / "exports" / f"{session_id}.csv"
            export_path.parent.mkdir(parents=True, exist_ok=True)
            export_path.write_bytes(self.export_csv(session_id))
            return {
                "session_id": session_id,
                "persons_marked": len(records),
                "total_events": session["events_total"],
            }

    def export_csv(self, session_id: str) -> bytes:
        """Deterministic UTF-8/LF rendering of a session's attendance,
        sorted by person id."""
        if self.store.get("sessions", session_id) is None:
            raise SessionNotFound(session_id)
        lines = [CSV_HEADER]
        for _, doc in self.store.query("attendance", {"session_id": session_id}):
            lines.append(
                ",".join(
                    (
                        csv_field(doc["person_id"]),
                        csv_field(doc["name"]),
                        str(doc["count"]),
                        csv_field(doc["first_seen"]),
                        csv_field(doc["last_seen"]),
                    )
                )
            )
        return ("\n".join(lines) + "\n").encode("utf-8")
