"""Command-line entry points: serve, train, enroll, session.

The data directory comes from --data-root or the PRESENCIA_DATA_ROOT
environment variable. Headless enrollment and sessions read PNM frames
from a directory in filename order.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import timedelta
from pathlib import Path

from .attendance import AttendanceEngine, format_utc, parse_utc
from .classifier import HeadHyper
from .docstore import DocStore
from .embedder import SiameseHyper
from .enrollment import (
    EnrollmentError,
    NoFace,
    MultipleFaces,
    capture_sample,
    finalize_enrollment,
    register_person,
)
from .imagecore import decode_pnm
from .pipeline import load_cascade_file, load_models, train_models
from .service import DEFAULT_PORT, serve


def _data_root(args) -> Path:
    root = args.data_root or os.environ.get("PRESENCIA_DATA_ROOT")
    if not root:
        sys.exit("no data root: pass --data-root or set PRESENCIA_DATA_ROOT")
    return Path(root)


def _frames(frames_dir: str):
    paths = sorted(Path(frames_dir).glob("*.p[np]m"))
    if not paths:
        sys.exit(f"no .pnm/.ppm frames under {frames_dir}")
    for path in paths:
        yield path, decode_pnm(path.read_bytes())


def cmd_serve(args) -> None:
    static = Path(args.static_dir) if args.static_dir else None
    serve(_data_root(args), port=args.port, static_dir=static)


def cmd_train(args) -> None:
    root = _data_root(args)
    store = DocStore(root / "db")
    metrics = train_models(
        store,
        root,
        SiameseHyper(epochs=args.epochs, lr=args.lr, batch=args.batch, seed=args.seed),
        HeadHyper(epochs=args.head_epochs, hidden=args.hidden, seed=args.seed + 1),
    )
    for key, value in sorted(metrics.items()):
        print(f"{key}: {value}")


def cmd_enroll(args) -> None:
    root = _data_root(args)
    store = DocStore(root / "db")
    cascade = load_cascade_file(root)
    if cascade is None:
        sys.exit(f"no cascade installed at {root}/models/cascade.txt")
    if store.get("persons", args.id) is None:
        register_person(store, args.id, args.name)
    stored = skipped = 0
    for path, frame in _frames(args.frames_dir):
        try:
            _, count = capture_sample(store, root, args.id, frame, cascade)
            stored += 1
            print(f"{path.name}: stored (sample_count={count})")
        except (NoFace, MultipleFaces) as exc:
            skipped += 1
            print(f"{path.name}: skipped ({exc.__class__.__name__})")
        if stored >= args.k:
            break
    try:
        record = finalize_enrollment(store, args.id, k_min=args.k_min)
        print(f"{args.id}: {record['status']} with {record['sample_count']} samples")
    except EnrollmentError as exc:
        sys.exit(f"finalize failed: {exc}")


def cmd_session(args) -> None:
    root = _data_root(args)
    store = DocStore(root / "db")
    engine = AttendanceEngine(store, root, load_models(store, root))
    start = parse_utc(args.start_time)
    session = engine.start_session(args.name, debounce_s=args.debounce_s, started_at=start)
    sid = session["session_id"]
    stamp = start
    for path, frame in _frames(args.frames_dir):
        events = engine.process_frame(sid, frame, stamp)
        for ev in events:
            mark = "+" if ev.marked else " "
            print(f"{path.name} {format_utc(stamp)} [{mark}] {ev.person_id} ({ev.top_prob:.2f})")
        stamp = stamp + timedelta(seconds=args.interval_s)
    summary = engine.end_session(sid, ended_at=stamp)
    csv_bytes = engine.export_csv(sid)
    out = Path(args.out)
    out.write_bytes(csv_bytes)
    print(f"session {sid}: {summary['persons_marked']} persons, {summary['total_events']} events")
    print(f"csv written to {out}")


def main(argv=None) -> None:
    parser = argparse.ArgumentParser(prog="presencia", description=__doc__)
    parser.add_argument("--data-root", help="data directory (default: $PRESENCIA_DATA_ROOT)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--static-dir", help="directory with the browser console build")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("train", help="train embedder and classifier from enrolled samples")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--head-epochs", type=int, default=600)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("enroll", help="enroll a person from a directory of PNM frames")
    p.add_argument("--id", required=True)
    p.add_argument("--name", required=True)
    p.add_argument("--frames-dir", required=True)
    p.add_argument("--k", type=int, default=50, help="samples to capture")
    p.add_argument("--k-min", type=int, default=50, help="minimum samples to finalize")
    p.set_defaults(fn=cmd_enroll)

    p = sub.add_parser("session", help="run an attendance session over a frame directory")
    p.add_argument("--frames-dir", required=True)
    p.add_argument("--out", required=True, help="CSV output path")
    p.add_argument("--name", default="headless")
    p.add_argument("--debounce-s", type=int, default=30)
    p.add_argument("--start-time", default="2026-01-01T09:00:00Z")
    p.add_argument("--interval-s", type=int, default=1)
    p.set_defaults(fn=cmd_session)

    args = parser.parse_args(argv)
    args.fn(args)


if __name__ == "__main__":
    main()
