"""Face preprocessing, 128-d embeddings, pair verification, and Siamese
training with a contrastive loss on the absolute (L1) pair distance.

A single Network instance serves both branches of every pair, so the two
branches share parameters by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagecore import GrayImage, Image, OutOfBounds, Rect, RgbImage, crop, resize_bilinear
from .neural import (
    Conv2d,
    Dense,
    Flatten,
    L2Normalize,
    MaxPool2d,
    Network,
    Relu,
    add_grads,
    backward,
    forward,
    init_network,
    scale_grads,
    sgd_step,
)

F32 = np.float32

CHIP_SIZE = 160
EMBEDDING_DIM = 128


class EmbedderError(Exception):
    pass


class DegenerateLabels(EmbedderError):
    pass


@dataclass(frozen=True)
class FaceChip:
    """Square face crop as a [3, S, S] float32 tensor scaled to [-1, 1].

    The production pipeline emits S = 160; training accepts any square
    size consistent with the network spec.
    """

    tensor: np.ndarray

    def __post_init__(self) -> None:
        t = self.tensor
        if t.ndim != 3 or t.shape[0] != 3 or t.shape[1] != t.shape[2]:
            raise ValueError(f"chip must be [3,S,S], got {t.shape}")
        if t.dtype != F32:
            raise ValueError(f"chip must be float32, got {t.dtype}")
        if float(t.min()) < -1.0 or float(t.max()) > 1.0:
            raise ValueError("chip values must lie in [-1, 1]")
        t = np.ascontiguousarray(t)
        t.flags.writeable = False
        object.__setattr__(self, "tensor", t)

    @property
    def size(self) -> int:
        return self.tensor.shape[1]


@dataclass(frozen=True)
class Embedding:
    """L2-normalized 128-d face code."""

    vector: np.ndarray

    def __post_init__(self) -> None:
        v = self.vector
        if v.shape != (EMBEDDING_DIM,):
            raise ValueError(f"embedding must have {EMBEDDING_DIM} dims, got {v.shape}")
        n = float(np.linalg.norm(v))
        if abs(n - 1.0) > 1e-5:
            raise ValueError(f"embedding norm {n} outside 1 +- 1e-5")
        v = np.ascontiguousarray(v, dtype=F32)
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class PairSample:
    chip_a: FaceChip
    chip_b: FaceChip
    label: int  # 1 same person, 0 different

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class SiameseHyper:
    epochs: int = 20
    lr: float = 0.05
    batch: int = 16
    margin: float = 1.0
    seed: int = 0


def default_embedder_spec(embedding_dim: int = EMBEDDING_DIM):
    """Conv stack sized for square chips down to 40x40."""
    return (
        Conv2d(8, 3, stride=2, padding=1),
        Relu(),
        MaxPool2d(2, 2),
        Conv2d(16, 3, stride=2, padding=1),
        Relu(),
        MaxPool2d(2, 2),
        Conv2d(32, 3, stride=2, padding=1),
        Relu(),
        Flatten(),
        Dense(embedding_dim),
        L2Normalize(),
    )


def square_about_center(box: Rect, img_w: int, img_h: int) -> Rect:
    """Expand `box` to a square about its center, clamped into the image."""
    side = min(max(box.w, box.h), img_w, img_h)
    cx = box.x + box.w / 2.0
    cy = box.y + box.h / 2.0
    x = int(round(cx - side / 2.0))
    y = int(round(cy - side / 2.0))
    x = min(max(x, 0), img_w - side)
    y = min(max(y, 0), img_h - side)
    return Rect(x, y, side, side)


def chip_from_image(img: Image) -> FaceChip:
    """Scale an already-cropped square image into chip tensor form."""
    if isinstance(img, GrayImage):
        planes = np.repeat(img.pixels[None, :, :], 3, axis=0)
    else:
        planes = np.transpose(img.pixels, (2, 0, 1))
    tensor = planes.astype(F32) / F32(127.5) - F32(1.0)
    return FaceChip(tensor=np.clip(tensor, -1.0, 1.0).astype(F32))


def preprocess(img: Image, face_box: Rect, chip_size: int = CHIP_SIZE) -> FaceChip:
    """Square-expand the face box, crop, resize to the chip size, and scale
    channels to [-1, 1]; gray inputs are replicated to three channels."""
    if face_box.x + face_box.w > img.width or face_box.y + face_box.h > img.height:
        raise OutOfBounds(f"face box {face_box} outside {img.width}x{img.height}")
    square = square_about_center(face_box, img.width, img.height)
    face = crop(img, square)
    if (face.width, face.height) != (chip_size, chip_size):
        face = resize_bilinear(face, chip_size, chip_size)
    return chip_from_image(face)


def chip_to_rgb(chip: FaceChip) -> RgbImage:
    """Inverse of chip_from_image's scaling, for storing chips as images."""
    planes = (chip.tensor + F32(1.0)) * F32(127.5)
    px = np.clip(np.floor(planes + 0.5), 0, 255).astype(np.uint8)
    return RgbImage(np.transpose(px, (1, 2, 0)))


def embed(net: Network, chip: FaceChip) -> Embedding:
    out, _ = forward(net, chip.tensor)
    return Embedding(vector=out)


def pair_distance(a: Embedding, b: Embedding) -> float:
    """Absolute (L1) distance between two embeddings."""
    return float(np.sum(np.abs(a.vector.astype(np.float64) - b.vector.astype(np.float64))))


def verify(a: Embedding, b: Embedding, tau: float) -> bool:
    """Same person iff the pair distance is strictly below tau."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return pair_distance(a, b) < tau


def contrastive_loss(d: float, label: int, margin: float) -> tuple[float, float]:
    """loss = label*d + (1-label)*max(0, margin-d), with its d-derivative.

    Same pairs are pulled together linearly; different pairs are pushed
    apart until the margin is met. At d == margin the hinge gradient is 0.
    """
    if d < 0:
        raise ValueError("distance must be nonnegative")
    if label == 1:
        return d, 1.0
    if d < margin:
        return margin - d, -1.0
    return 0.0, 0.0


def train_siamese(dataset: list[PairSample], spec, hyper: SiameseHyper) -> Network:
    """Mini-batch SGD on the contrastive loss through both shared branches.

    The pair-distance gradient splits as sign(a_i - b_i) * dloss into the
    first branch and its negation into the second (sign(0) = 0). A fixed
    seed makes the final weights bit-reproducible.
    """
    labels = {p.label for p in dataset}
    if labels != {0, 1}:
        raise DegenerateLabels(f"need both pair labels, got {sorted(labels)}")
    size = dataset[0].chip_a.size
    net = init_network(spec, (3, size, size), seed=hyper.seed)
    rng = np.random.default_rng(hyper.seed)
    for _ in range(hyper.epochs):
        order = rng.permutation(len(dataset))
        for lo in range(0, len(order), hyper.batch):
            batch = order[lo : lo + hyper.batch]
            acc = None
            for idx in batch:
                pair = dataset[idx]
                ea, cache_a = forward(net, pair.chip_a.tensor)
                eb, cache_b = forward(net, pair.chip_b.tensor)
                d = float(np.sum(np.abs(ea.astype(np.float64) - eb.astype(np.float64))))
                _, dloss = contrastive_loss(d, pair.label, hyper.margin)
                if dloss != 0.0:
                    g = (np.sign(ea - eb) * F32(dloss)).astype(F32)
                    ga, _ = backward(net, cache_a, g)
                    gb, _ = backward(net, cache_b, -g)
                    acc = add_grads(acc, ga)
                    acc = add_grads(acc, gb)
            if acc is not None:
                net = sgd_step(net, scale_grads(acc, 1.0 / len(batch)), hyper.lr)
    return net


def best_distance_threshold(distances, labels) -> tuple[float, float]:
    """Midpoint threshold minimizing classification error for the rule
    "same iff d < tau"; ties prefer the smaller tau. Returns (tau, error)."""
    ds = np.asarray(distances, dtype=np.float64)
    ys = np.asarray(labels, dtype=np.int64)
    xs = np.unique(ds)
    cands = [float(xs[0])]
    cands += [float((a + b) / 2.0) for a, b in zip(xs, xs[1:])]
    cands.append(float(xs[-1]) + 1.0)
    best_tau, best_err = cands[0], float("inf")
    n = len(ds)
    for tau in cands:
        pred_same = ds < tau
        err = float(np.sum(pred_same != (ys == 1))) / n
        if err < best_err:
            best_tau, best_err = tau, err
    return best_tau, best_err


def calibrate_tau(net: Network, labeled_pairs: list[PairSample]) -> float:
    """Distance threshold that best separates same from different pairs."""
    labels = {p.label for p in labeled_pairs}
    if labels != {0, 1}:
        raise DegenerateLabels(f"need both pair labels, got {sorted(labels)}")
    distances = []
    for pair in labeled_pairs:
        distances.append(pair_distance(embed(net, pair.chip_a), embed(net, pair.chip_b)))
    tau, _ = best_distance_threshold(distances, [p.label for p in labeled_pairs])
    return tau
