"""HTTP facade over the pipeline: enrollment, training, sessions, exports.

Built on the standard library's threading HTTP server. The layer adds no
behavior of its own: every endpoint delegates to the library operations,
so driving the API and driving the library produce identical store state.

Concurrency: enrollment is serialized per person, frame processing per
session (the attendance engine locks), and at most one training job runs
at a time. The per-session event stream is server-sent events; each
subscriber receives every event processed after it connected, in order.
"""

from __future__ import annotations

import json
import queue
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import attendance as att
from . import enrollment as enr
from .attendance import AttendanceEngine, parse_utc
from .classifier import HeadHyper
from .docstore import DocStore
from .embedder import SiameseHyper
from .imagecore import ImageError, decode_pnm
from .pipeline import ModelsNotReady, load_cascade_file, load_models, models_ready, train_models

DEFAULT_PORT = 8770


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message

    def body(self) -> dict:
        return {"code": self.code, "message": self.message, "http_status": self.status}


_ERROR_MAP = [
    (enr.DuplicateId, 409, "DUPLICATE_ID"),
    (enr.InvalidId, 422, "INVALID_ID"),
    (enr.PersonNotFound, 404, "PERSON_NOT_FOUND"),
    (enr.AlreadyReady, 409, "ALREADY_READY"),
    (enr.NoFace, 422, "NO_FACE"),
    (enr.MultipleFaces, 422, "MULTIPLE_FACES"),
    (enr.InsufficientSamples, 409, "INSUFFICIENT_SAMPLES"),
    (enr.NotEnoughPersons, 409, "NOT_ENOUGH_PERSONS"),
    (att.SessionNotFound, 404, "SESSION_NOT_FOUND"),
    (att.SessionNotRunning, 409, "SESSION_NOT_RUNNING"),
    (att.NonMonotoneTimestamp, 422, "NON_MONOTONE_TIMESTAMP"),
    (ModelsNotReady, 409, "MODELS_NOT_READY"),
    (ImageError, 422, "BAD_IMAGE"),
]


def _to_api_error(exc: Exception) -> ApiError:
    for klass, status, code in _ERROR_MAP:
        if isinstance(exc, klass):
            return ApiError(status, code, str(exc))
    return ApiError(500, "INTERNAL", str(exc))


class EventBroker:
    """Per-session fanout of recognition events to stream subscribers."""

    _END = object()

    def __init__(self):
        self._lock = threading.Lock()
        self._subs: dict[str, list[queue.Queue]] = {}

    def subscribe(self, session_id: str) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subs.setdefault(session_id, []).append(q)
        return q

    def unsubscribe(self, session_id: str, q: queue.Queue) -> None:
        with self._lock:
            subs = self._subs.get(session_id, [])
            if q in subs:
                subs.remove(q)

    def publish(self, session_id: str, events: list[dict]) -> None:
        with self._lock:
            subs = list(self._subs.get(session_id, []))
        for q in subs:
            for ev in events:
                q.put(ev)

    def close(self, session_id: str) -> None:
        with self._lock:
            subs = self._subs.pop(session_id, [])
        for q in subs:
            q.put(self._END)


@dataclass
class TrainJob:
    job_id: str
    state: str = "running"  # running | done | failed
    metrics: dict | None = None
    error: str | None = None


class App:
    """Shared state behind the HTTP handler."""

    def __init__(self, data_root: Path, static_dir: Path | None = None):
        self.data_root = Path(data_root)
        self.static_dir = static_dir
        self.store = DocStore(self.data_root / "db")
        self.broker = EventBroker()
        self._engine: AttendanceEngine | None = None
        self._engine_lock = threading.Lock()
        self._person_locks: dict[str, threading.Lock] = {}
        self._train_lock = threading.Lock()
        self._jobs: dict[str, TrainJob] = {}
        self._job_seq = 0

    def engine(self) -> AttendanceEngine:
        with self._engine_lock:
            if self._engine is None:
                models = load_models(self.store, self.data_root)  # raises ModelsNotReady
                self._engine = AttendanceEngine(self.store, self.data_root, models)
            return self._engine

    def invalidate_models(self) -> None:
        with self._engine_lock:
            self._engine = None

    def person_lock(self, person_id: str) -> threading.Lock:
        with self._engine_lock:
            return self._person_locks.setdefault(person_id, threading.Lock())

    def cascade(self):
        cascade = load_cascade_file(self.data_root)
        if cascade is None:
            raise ModelsNotReady("no detection cascade installed")
        return cascade

    # -- training jobs ---------------------------------------------------------

    def start_training(self, siamese: SiameseHyper, head: HeadHyper) -> TrainJob:
        with self._train_lock:
            for job in self._jobs.values():
                if job.state == "running":
                    raise ApiError(409, "TRAINING_IN_PROGRESS", f"job {job.job_id} is running")
            ready = [d for _, d in self.store.query("persons", {"status": "ready"})]
            if len(ready) < 2:
                raise ApiError(409, "NOT_ENOUGH_PERSONS", f"{len(ready)} ready persons, need 2")
            self._job_seq += 1
            job = TrainJob(job_id=f"job-{self._job_seq:03d}")
            self._jobs[job.job_id] = job

        def run():
            try:
                job.metrics = train_models(self.store, self.data_root, siamese, head)
                job.state = "done"
                self.invalidate_models()
            except Exception as exc:
                job.state = "failed"
                job.error = str(exc)

        threading.Thread(target=run, daemon=True).start()
        return job

    def job(self, job_id: str) -> TrainJob:
        with self._train_lock:
            if job_id not in self._jobs:
                raise ApiError(404, "JOB_NOT_FOUND", job_id)
            return self._jobs[job_id]


def _json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode("utf-8")


class Handler(BaseHTTPRequestHandler):
    app: App  # set by make_server
    protocol_version = "HTTP/1.1"

    ROUTES = []  # populated below

    def log_message(self, *args):  # quiet by default
        pass

    # -- plumbing ----------------------------------------------------------------

    def _body(self) -> bytes:
        length = int(self.headers.get("Content-Length", 0))
        return self.rfile.read(length) if length else b""

    def _json_body(self) -> dict:
        data = self._body()
        try:
            parsed = json.loads(data.decode("utf-8")) if data else {}
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise ApiError(400, "BAD_JSON", "request body is not valid JSON")
        if not isinstance(parsed, dict):
            raise ApiError(400, "BAD_JSON", "request body must be a JSON object")
        return parsed

    def _send(self, status: int, payload: bytes, content_type="application/json"):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(payload)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(payload)

    def _send_json(self, status: int, obj):
        self._send(status, _json_bytes(obj))

    def _dispatch(self, method: str):
        path = self.path.split("?", 1)[0]
        for m, pattern, fn in self.ROUTES:
            if m != method:
                continue
            match = pattern.match(path)
            if match:
                try:
                    fn(self, *match.groups())
                except ApiError as exc:
                    self._send_json(exc.status, exc.body())
                except Exception as exc:  # noqa: BLE001 - boundary
                    api = _to_api_error(exc)
                    self._send_json(api.status, api.body())
                return
        self._send_json(404, ApiError(404, "NOT_FOUND", path).body())

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_OPTIONS(self):
        self.send_response(204)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type, X-Timestamp")
        self.send_header("Content-Length", "0")
        self.end_headers()

    # -- endpoints ------------------------------------------------------------

    def create_person(self):
        body = self._json_body()
        record = enr.register_person(self.app.store, str(body.get("id", "")), str(body.get("name", "")))
        self._send_json(201, record)

    def upload_sample(self, person_id):
        frame = decode_pnm(self._body())
        with self.app.person_lock(person_id):
            _, count = enr.capture_sample(
                self.app.store, self.app.data_root, person_id, frame, self.app.cascade()
            )
        self._send_json(200, {"stored": True, "sample_count": count})

    def finalize_person(self, person_id):
        body = self._json_body()
        k_min = int(body.get("k_min", enr.K_TARGET))
        record = enr.finalize_enrollment(self.app.store, person_id, k_min=k_min)
        self._send_json(200, record)

    def list_persons(self):
        self._send_json(200, {"persons": [doc for _, doc in self.app.store.query("persons")]})

    def start_training(self):
        body = self._json_body()
        siamese = SiameseHyper(**body.get("siamese", {}))
        head = HeadHyper(**body.get("head", {}))
        job = self.app.start_training(siamese, head)
        self._send_json(202, {"job_id": job.job_id, "state": job.state})

    def train_status(self, job_id):
        job = self.app.job(job_id)
        self._send_json(
            200, {"job_id": job.job_id, "state": job.state, "metrics": job.metrics, "error": job.error}
        )

    def status(self):
        ready = models_ready(self.app.store, self.app.data_root)
        persons = self.app.store.query("persons")
        sessions = self.app.store.query("sessions")
        self._send_json(
            200,
            {
                "models_ready": ready,
                "persons": len(persons),
                "sessions": len(sessions),
                "cascade_installed": load_cascade_file(self.app.data_root) is not None,
            },
        )

    def create_session(self):
        body = self._json_body()
        debounce = body.get("debounce_s", 30)
        started = parse_utc(body["started_at"]) if "started_at" in body else None
        session = self.app.engine().start_session(
            str(body.get("name", "")), debounce_s=debounce, started_at=started
        )
        self._send_json(201, session)

    def list_sessions(self):
        self._send_json(200, {"sessions": [doc for _, doc in self.app.store.query("sessions")]})

    def push_frame(self, session_id):
        stamp = self.headers.get("X-Timestamp")
        if not stamp:
            raise ApiError(422, "NON_MONOTONE_TIMESTAMP", "missing X-Timestamp header")
        try:
            timestamp = parse_utc(stamp)
        except ValueError:
            raise ApiError(422, "NON_MONOTONE_TIMESTAMP", f"bad timestamp {stamp!r}")
        frame = decode_pnm(self._body())
        events = self.app.engine().process_frame(session_id, frame, timestamp)
        payload = [e.to_json() for e in events]
        self.app.broker.publish(session_id, payload)
        self._send_json(200, {"events": payload})

    def end_session(self, session_id):
        body = self._json_body()
        ended = parse_utc(body["ended_at"]) if "ended_at" in body else None
        summary = self.app.engine().end_session(session_id, ended_at=ended)
        self.app.broker.close(session_id)
        self._send_json(200, summary)

    def export_csv(self, session_id):
        data = self.app.engine().export_csv(session_id)
        self._send(200, data, content_type="text/csv; charset=utf-8")

    def session_records(self, session_id):
        if self.app.store.get("sessions", session_id) is None:
            raise ApiError(404, "SESSION_NOT_FOUND", session_id)
        rows = self.app.store.query("attendance", {"session_id": session_id})
        self._send_json(200, {"records": [doc for _, doc in rows]})

    def event_stream(self, session_id):
        session = self.app.store.get("sessions", session_id)
        if session is None:
            raise ApiError(404, "SESSION_NOT_FOUND", session_id)
        q = self.app.broker.subscribe(session_id)
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-store")
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Connection", "close")
            self.end_headers()
            if session["state"] != "running":
                self.wfile.write(b"event: end\ndata: {}\n\n")
                self.wfile.flush()
                return
            while True:
                item = q.get()
                if item is EventBroker._END:
                    self.wfile.write(b"event: end\ndata: {}\n\n")
                    self.wfile.flush()
                    return
                self.wfile.write(b"data: " + _json_bytes(item) + b"\n\n")
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            self.app.broker.unsubscribe(session_id, q)
            self.close_connection = True

    def serve_static(self, rel_path):
        base = self.app.static_dir
        rel_path = rel_path or "index.html"
        if rel_path == "config.json" and (base is None or not (base / "config.json").exists()):
            self._send_json(200, {"api_base_url": "", "capture_interval_ms": 300, "target_samples": 50})
            return
        if base is None:
            raise ApiError(404, "NOT_FOUND", "no static directory configured")
        target = (base / rel_path).resolve()
        if not str(target).startswith(str(base.resolve())) or not target.is_file():
            raise ApiError(404, "NOT_FOUND", rel_path)
        kinds = {
            ".html": "text/html; charset=utf-8",
            ".js": "text/javascript; charset=utf-8",
            ".css": "text/css; charset=utf-8",
            ".json": "application/json",
        }
        self._send(200, target.read_bytes(), kinds.get(target.suffix, "application/octet-stream"))


Handler.ROUTES = [
    ("POST", re.compile(r"^/api/persons$"), Handler.create_person),
    ("GET", re.compile(r"^/api/persons$"), Handler.list_persons),
    ("POST", re.compile(r"^/api/persons/([A-Za-z0-9_-]+)/samples$"), Handler.upload_sample),
    ("POST", re.compile(r"^/api/persons/([A-Za-z0-9_-]+)/finalize$"), Handler.finalize_person),
    ("POST", re.compile(r"^/api/train$"), Handler.start_training),
    ("GET", re.compile(r"^/api/train/([A-Za-z0-9_-]+)$"), Handler.train_status),
    ("GET", re.compile(r"^/api/status$"), Handler.status),
    ("POST", re.compile(r"^/api/sessions$"), Handler.create_session),
    ("GET", re.compile(r"^/api/sessions$"), Handler.list_sessions),
    ("POST", re.compile(r"^/api/sessions/([A-Za-z0-9_-]+)/frames$"), Handler.push_frame),
    ("POST", re.compile(r"^/api/sessions/([A-Za-z0-9_-]+)/end$"), Handler.end_session),
    ("GET", re.compile(r"^/api/sessions/([A-Za-z0-9_-]+)/export\.csv$"), Handler.export_csv),
    ("GET", re.compile(r"^/api/sessions/([A-Za-z0-9_-]+)/records$"), Handler.session_records),
    ("GET", re.compile(r"^/api/sessions/([A-Za-z0-9_-]+)/events$"), Handler.event_stream),
    ("GET", re.compile(r"^/app/(.*)$"), Handler.serve_static),
]


def make_server(data_root: Path, port: int = 0, static_dir: Path | None = None) -> ThreadingHTTPServer:
    """Bind a server (port 0 picks a free port); call serve_forever() on it."""
    app = App(data_root, static_dir=static_dir)

    class BoundHandler(Handler):
        pass

    BoundHandler.app = app
    server = ThreadingHTTPServer(("127.0.0.1", port), BoundHandler)
    server.daemon_threads = True
    server.app = app
    return server


def serve(data_root: Path, port: int = DEFAULT_PORT, static_dir: Path | None = None) -> None:
    server = make_server(data_root, port=port, static_dir=static_dir)
    host, bound_port = server.server_address
    print(f"presencia serving on http://{host}:{bound_port} (data root: {data_root})")
    try:
        server.serve_forever()
    finally:
        server.server_close()
