"""Softmax identity head over face embeddings, with unknown rejection.

The head maps a 128-d embedding through a small dense-relu-dense stack to
per-person probabilities. Faces whose top probability falls below the
rejection threshold are reported as UNKNOWN rather than forced onto an
enrolled identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedder import EMBEDDING_DIM, Embedding
from .neural import (
    Dense,
    Network,
    NonFiniteValue,
    Relu,
    add_grads,
    backward,
    forward,
    init_network,
    scale_grads,
    sgd_step,
)

F32 = np.float32

UNKNOWN = "UNKNOWN"


class ClassifierError(Exception):
    pass


class DegenerateLabels(ClassifierError):
    pass


@dataclass(frozen=True)
class HeadHyper:
    epochs: int = 600
    lr: float = 0.1
    hidden: int = 64
    batch: int = 16
    seed: int = 0


@dataclass(frozen=True)
class ClassifierHead:
    net: Network
    class_ids: tuple[str, ...]
    reject_threshold: float = 0.6

    def __post_init__(self) -> None:
        if not self.class_ids:
            raise ValueError("head needs at least one class")
        if len(set(self.class_ids)) != len(self.class_ids):
            raise ValueError("class ids must be unique")
        if not 0.0 < self.reject_threshold < 1.0:
            raise ValueError("reject threshold must lie in (0, 1)")


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    top_id: str
    top_prob: float


def head_spec(hidden: int, n_classes: int):
    return (Dense(hidden), Relu(), Dense(n_classes))


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax: exp(x - max) / sum."""
    x = np.asarray(logits, dtype=np.float64)
    if not np.isfinite(x).all():
        raise NonFiniteValue("non-finite logits")
    e = np.exp(x - x.max())
    return e / e.sum()


def train_head(embeddings: list[Embedding], labels: list[str], hyper: HeadHyper) -> ClassifierHead:
    """Cross-entropy mini-batch SGD; class ids ordered lexicographically so
    retrains over identical data produce an identical head."""
    if len(embeddings) != len(labels) or not embeddings:
        raise ValueError("need one label per embedding")
    class_ids = tuple(sorted(set(labels)))
    if len(class_ids) < 2:
        raise DegenerateLabels(f"need >= 2 classes, got {class_ids}")
    index = {c: i for i, c in enumerate(class_ids)}
    y = np.array([index[lab] for lab in labels])
    X = [e.vector for e in embeddings]

    net = init_network(head_spec(hyper.hidden, len(class_ids)), (EMBEDDING_DIM,), seed=hyper.seed)
    rng = np.random.default_rng(hyper.seed)
    for _ in range(hyper.epochs):
        order = rng.permutation(len(X))
        for lo in range(0, len(order), hyper.batch):
            batch = order[lo : lo + hyper.batch]
            acc = None
            for idx in batch:
                logits, cache = forward(net, X[idx])
                probs = softmax(logits)
                dlogits = probs.astype(F32)
                dlogits[y[idx]] -= F32(1.0)
                grads, _ = backward(net, cache, dlogits)
                acc = add_grads(acc, grads)
            net = sgd_step(net, scale_grads(acc, 1.0 / len(batch)), hyper.lr)
    return ClassifierHead(net=net, class_ids=class_ids)


def predict(head: ClassifierHead, e: Embedding) -> Prediction:
    """Per-person probabilities; UNKNOWN when the winner is not confident.

    Argmax ties resolve to the first index, which is the lexicographically
    smallest id given the sorted class_ids ordering.
    """
    logits, _ = forward(head.net, e.vector)
    probs = softmax(logits)
    top = int(np.argmax(probs))
    top_prob = float(probs[top])
    top_id = head.class_ids[top] if top_prob >= head.reject_threshold else UNKNOWN
    return Prediction(probs=probs, top_id=top_id, top_prob=top_prob)


def accuracy(head: ClassifierHead, embeddings: list[Embedding], labels: list[str]) -> float:
    """Fraction of argmax hits, ignoring the rejection rule."""
    hit = 0
    for e, lab in zip(embeddings, labels):
        logits, _ = forward(head.net, e.vector)
        hit += head.class_ids[int(np.argmax(softmax(logits)))] == lab
    return hit / len(embeddings)
