"""Model lifecycle: training over enrolled samples, persistence, loading.

The trained bundle lives under `<data_root>/models/` (cascade document,
embedder and head weight files) with a metadata document in the docstore
`models` collection keyed "current". The detection cascade is an external
input: place a cascade file at `<data_root>/models/cascade.txt` before
enrolling or serving.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import ClassifierHead, HeadHyper, accuracy, head_spec, train_head
from .docstore import DocStore
from .embedder import (
    Embedding,
    SiameseHyper,
    calibrate_tau,
    default_embedder_spec,
    embed,
    pair_distance,
    train_siamese,
)
from .enrollment import build_training_sets
from .haar import HaarCascade, load_cascade
from .neural import Network, load_weights, save_weights

DEFAULT_THETA = 0.6
METADATA_ID = "current"


class PipelineError(Exception):
    pass


class ModelsNotReady(PipelineError):
    pass


@dataclass(frozen=True)
class ModelBundle:
    cascade: HaarCascade
    embedder: Network
    head: ClassifierHead
    tau: float
    chip_size: int
    # enrolled reference embeddings per class id, for verification gating
    gallery: dict[str, list[Embedding]]


def models_dir(data_root: Path) -> Path:
    return Path(data_root) / "models"


def cascade_path(data_root: Path) -> Path:
    return models_dir(data_root) / "cascade.txt"


def load_cascade_file(data_root: Path) -> HaarCascade | None:
    path = cascade_path(data_root)
    if not path.exists():
        return None
    return load_cascade(path.read_bytes())


def save_cascade_file(data_root: Path, cascade: HaarCascade) -> Path:
    from .haar import save_cascade

    path = cascade_path(data_root)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(save_cascade(cascade))
    return path


def train_models(
    store: DocStore,
    data_root: Path,
    siamese_hyper: SiameseHyper,
    head_hyper: HeadHyper,
    theta: float = DEFAULT_THETA,
) -> dict:
    """Train embedder and head over all ready persons, persist both plus
    the calibrated verification threshold, and return training metrics."""
    pairs, labeled = build_training_sets(store, data_root, seed=siamese_hyper.seed)
    chip_size = labeled[0][0].size

    net = train_siamese(pairs, default_embedder_spec(), siamese_hyper)

    embedded: dict[int, Embedding] = {}
    embeddings, labels = [], []
    for i, (chip, pid) in enumerate(labeled):
        embedded[i] = embed(net, chip)
        embeddings.append(embedded[i])
        labels.append(pid)
    tau = calibrate_tau(net, pairs)
    head = train_head(embeddings, labels, head_hyper)
    head = ClassifierHead(net=head.net, class_ids=head.class_ids, reject_threshold=theta)

    mdir = models_dir(data_root)
    mdir.mkdir(parents=True, exist_ok=True)
    (mdir / "embedder.prsn").write_bytes(save_weights(net))
    (mdir / "head.prsn").write_bytes(save_weights(head.net))
    meta = {
        "embedder_file": "embedder.prsn",
        "head_file": "head.prsn",
        "tau": repr(tau),
        "theta": theta,
        "hidden": head_hyper.hidden,
        "chip_size": chip_size,
        "class_ids": list(head.class_ids),
    }
    if store.get("models", METADATA_ID) is None:
        store.insert("models", METADATA_ID, meta)
    else:
        store.update("models", METADATA_ID, meta)

    same = [pair_distance(embed(net, p.chip_a), embed(net, p.chip_b)) for p in pairs if p.label == 1]
    diff = [pair_distance(embed(net, p.chip_a), embed(net, p.chip_b)) for p in pairs if p.label == 0]
    return {
        "persons": len(head.class_ids),
        "chips": len(labeled),
        "pairs": len(pairs),
        "mean_same_distance": float(np.mean(same)),
        "mean_diff_distance": float(np.mean(diff)),
        "tau": tau,
        "head_train_accuracy": accuracy(head, embeddings, labels),
    }


def load_models(store: DocStore, data_root: Path) -> ModelBundle:
    """Assemble the runtime bundle; raises ModelsNotReady if the cascade,
    weights, or metadata are missing. The gallery re-embeds every enrolled
    sample of the trained classes so recognition can verify a named face
    against that person's enrollment before counting it."""
    from .enrollment import load_person_chips

    cascade = load_cascade_file(data_root)
    if cascade is None:
        raise ModelsNotReady(f"no cascade at {cascade_path(data_root)}")
    meta = store.get("models", METADATA_ID)
    if meta is None:
        raise ModelsNotReady("no trained model metadata")
    mdir = models_dir(data_root)
    embedder = load_weights((mdir / meta["embedder_file"]).read_bytes(), default_embedder_spec())
    n_classes = len(meta["class_ids"])
    head_net = load_weights(
        (mdir / meta["head_file"]).read_bytes(), head_spec(meta["hidden"], n_classes)
    )
    head = ClassifierHead(
        net=head_net, class_ids=tuple(meta["class_ids"]), reject_threshold=meta["theta"]
    )
    gallery = {
        pid: [embed(embedder, chip) for chip in load_person_chips(store, data_root, pid)]
        for pid in head.class_ids
    }
    return ModelBundle(
        cascade=cascade,
        embedder=embedder,
        head=head,
        tau=float(meta["tau"]),
        chip_size=meta["chip_size"],
        gallery=gallery,
    )


def models_ready(store: DocStore, data_root: Path) -> bool:
    try:
        load_models(store, data_root)
        return True
    except (ModelsNotReady, FileNotFoundError):
        return False
