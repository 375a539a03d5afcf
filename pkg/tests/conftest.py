"""Shared pipeline world: enrolled synthetic identities with trained models.

Building the world (enroll 3 people, train embedder + head at 160x160)
takes a few seconds, so it is session-scoped and shared by the
enrollment, attendance, service, and acceptance suites. Everything in it
is seeded and deterministic.
"""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import make_frame, scaffold_cascade

from presencia.classifier import HeadHyper
from presencia.docstore import DocStore
from presencia.embedder import SiameseHyper
from presencia.enrollment import (
    EnrollmentConfig,
    capture_sample,
    finalize_enrollment,
    register_person,
)
from presencia.pipeline import load_models, save_cascade_file, train_models

FRAME_W, FRAME_H = 96, 64
PLANT_SIZE = 29
K_MIN = 5

PEOPLE = {"s001": ("Ada", 1), "s002": ("Grace", 2), "s003": ("Alan", 3)}
STRANGER_IDENT = 9

SIAMESE_HYPER = SiameseHyper(epochs=10, lr=0.05, batch=8, margin=1.0, seed=11)
HEAD_HYPER = HeadHyper(epochs=600, lr=0.1, hidden=32, batch=8, seed=12)


def frame_for(ident: int, j: int, size: int = PLANT_SIZE):
    """Deterministic frame with one planted face, bottom-anchored."""
    x = 8 + (7 * j + ident * 3) % (FRAME_W - size - 10)
    y = FRAME_H - size - 2 - (j % 3)
    return make_frame([(ident, x, y, size)], w=FRAME_W, h=FRAME_H, bg_seed=ident * 1000 + j)


def build_world(root: Path):
    """Enroll PEOPLE from synthetic frames and train models under root."""
    store = DocStore(root / "db")
    cascade = scaffold_cascade()
    save_cascade_file(root, cascade)
    cfg = EnrollmentConfig(k_min=K_MIN)
    for pid, (name, ident) in PEOPLE.items():
        register_person(store, pid, name)
        for j in range(K_MIN):
            capture_sample(store, root, pid, frame_for(ident, j), cascade, cfg)
        finalize_enrollment(store, pid, k_min=K_MIN)
    metrics = train_models(store, root, SIAMESE_HYPER, HEAD_HYPER)
    return store, cascade, metrics


@pytest.fixture(scope="session")
def world(tmp_path_factory):
    root = tmp_path_factory.mktemp("world")
    store, cascade, metrics = build_world(root)
    return {
        "root": root,
        "store": store,
        "cascade": cascade,
        "metrics": metrics,
        "models": load_models(store, root),
    }
