"""Person registration and face-sample capture.

Samples are stored under `<data_root>/samples/<person_id>/sample_NNN.ppm`
as 160x160 color PPMs decodable by imagecore alone. A sample file is
written and synced before the person's counter is updated, and capture
always writes to index `sample_count` via an atomic replace, so a crash
between the two steps leaves an orphan file that the next capture simply
overwrites: files 000..count-1 always match the persisted count.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .classifier import UNKNOWN
from .docstore import DocStore
from .embedder import FaceChip, PairSample, chip_from_image, chip_to_rgb, preprocess
from .haar import DetectParams, HaarCascade, detect_multiscale, nms
from .imagecore import Image, decode_pnm, encode_pnm

K_TARGET = 50  # samples per person in the production flow

_ID_RE = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


class EnrollmentError(Exception):
    pass


class InvalidId(EnrollmentError):
    pass


class DuplicateId(EnrollmentError):
    pass


class PersonNotFound(EnrollmentError):
    pass


class AlreadyReady(EnrollmentError):
    pass


class NoFace(EnrollmentError):
    pass


class MultipleFaces(EnrollmentError):
    pass


class InsufficientSamples(EnrollmentError):
    pass


class NotEnoughPersons(EnrollmentError):
    pass


@dataclass(frozen=True)
class EnrollmentConfig:
    k_min: int = K_TARGET
    chip_size: int = 160
    nms_iou: float = 0.3
    detect: DetectParams = field(default_factory=DetectParams)


def samples_dir(data_root: Path, person_id: str) -> Path:
    return Path(data_root) / "samples" / person_id


def sample_path(data_root: Path, person_id: str, index: int) -> Path:
    return samples_dir(data_root, person_id) / f"sample_{index:03d}.ppm"


def register_person(store: DocStore, person_id: str, name: str) -> dict:
    if not _ID_RE.match(person_id or "") or person_id == UNKNOWN:
        raise InvalidId(f"bad person id {person_id!r}")
    if not name:
        raise InvalidId("name must be nonempty")
    if store.get("persons", person_id) is not None:
        raise DuplicateId(person_id)
    record = {"person_id": person_id, "name": name, "sample_count": 0, "status": "enrolling"}
    store.insert("persons", person_id, record)
    return record


def get_person(store: DocStore, person_id: str) -> dict:
    record = store.get("persons", person_id)
    if record is None:
        raise PersonNotFound(person_id)
    return record


def detect_single_face(frame: Image, cascade: HaarCascade, cfg: EnrollmentConfig):
    from .imagecore import as_gray

    detections = nms(detect_multiscale(as_gray(frame), cascade, cfg.detect), cfg.nms_iou)
    if not detections:
        raise NoFace("no face in frame")
    if len(detections) > 1:
        raise MultipleFaces(f"{len(detections)} faces in frame")
    return detections[0]


def capture_sample(
    store: DocStore,
    data_root: Path,
    person_id: str,
    frame: Image,
    cascade: HaarCascade,
    cfg: EnrollmentConfig | None = None,
) -> tuple[Path, int]:
    """Detect exactly one face, preprocess it, store the chip image, and
    bump the person's sample counter. Returns (chip_path, new_count)."""
    cfg = cfg or EnrollmentConfig()
    record = get_person(store, person_id)
    if record["status"] != "enrolling":
        raise AlreadyReady(person_id)
    detection = detect_single_face(frame, cascade, cfg)
    chip = preprocess(frame, detection.box, chip_size=cfg.chip_size)

    index = record["sample_count"]
    path = sample_path(data_root, person_id, index)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".ppm.tmp")
    data = encode_pnm(chip_to_rgb(chip))
    with open(tmp, "wb") as f:
        f.write(data)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)

    record["sample_count"] = index + 1
    store.update("persons", person_id, record)
    return path, record["sample_count"]


def finalize_enrollment(store: DocStore, person_id: str, k_min: int = K_TARGET) -> dict:
    record = get_person(store, person_id)
    if record["sample_count"] < k_min:
        raise InsufficientSamples(
            f"{person_id} has {record['sample_count']} samples, needs {k_min}"
        )
    record["status"] = "ready"
    store.update("persons", person_id, record)
    return record


def load_person_chips(store: DocStore, data_root: Path, person_id: str) -> list[FaceChip]:
    record = get_person(store, person_id)
    chips = []
    for i in range(record["sample_count"]):
        img = decode_pnm(sample_path(data_root, person_id, i).read_bytes())
        chips.append(chip_from_image(img))
    return chips


def build_training_sets(
    store: DocStore, data_root: Path, seed: int = 0
) -> tuple[list[PairSample], list[tuple[FaceChip, str]]]:
    """Labeled chips for the classifier plus a balanced pair set for the
    Siamese trainer: all within-person pairs and an equal count of seeded
    cross-person pairs."""
    ready = [doc for _, doc in store.query("persons", {"status": "ready"})]
    if len(ready) < 2:
        raise NotEnoughPersons(f"{len(ready)} ready persons, need 2")

    labeled: list[tuple[FaceChip, str]] = []
    by_person: dict[str, list[FaceChip]] = {}
    for record in ready:  # query is id-ordered already
        pid = record["person_id"]
        by_person[pid] = load_person_chips(store, data_root, pid)
        labeled.extend((chip, pid) for chip in by_person[pid])

    pairs: list[PairSample] = []
    for pid in sorted(by_person):
        chips = by_person[pid]
        for i in range(len(chips)):
            for j in range(i + 1, len(chips)):
                pairs.append(PairSample(chip_a=chips[i], chip_b=chips[j], label=1))
    rng = np.random.default_rng(seed)
    ids = sorted(by_person)
    for _ in range(len(pairs)):
        ia, ib = rng.choice(len(ids), size=2, replace=False)
        a = by_person[ids[ia]][rng.integers(0, len(by_person[ids[ia]]))]
        b = by_person[ids[ib]][rng.integers(0, len(by_person[ids[ib]]))]
        pairs.append(PairSample(chip_a=a, chip_b=b, label=0))
    return pairs, labeled
