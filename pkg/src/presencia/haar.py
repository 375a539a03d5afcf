"""Haar-like features, cascade evaluation, multi-scale detection, and a
desk-scale AdaBoost trainer.

Feature responses are area-normalized and weak thresholds are compared
against stddev-scaled values, so both training and detection are
insensitive to global illumination and contrast changes. Training
computes responses on variance-normalized base-window crops; detection
applies the equivalent comparison by scaling the threshold with the
window's stddev instead of dividing the feature value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .imagecore import GrayImage, IntegralImage, OutOfBounds, Rect, integral, rect_sum

DEFAULT_BASE = 24
FEATURE_BANK_CAP = 20_000


class HaarError(Exception):
    pass


class ImageTooSmall(HaarError):
    pass


class DegenerateLabels(HaarError):
    pass


class EmptyFeatureBank(HaarError):
    pass


class ParseError(HaarError):
    pass


class InvariantViolation(HaarError):
    pass


@dataclass(frozen=True)
class HaarFeature:
    """Weighted rectangles relative to a base window; weights sum to zero
    against their areas so constant regions produce a zero response."""

    rects: tuple[tuple[Rect, int], ...]

    def __post_init__(self) -> None:
        if not 2 <= len(self.rects) <= 3:
            raise InvariantViolation(f"feature needs 2..3 rects, got {len(self.rects)}")
        if sum(w * r.area for r, w in self.rects) != 0:
            raise InvariantViolation("feature weights do not cancel over areas")

    def fits(self, base_w: int, base_h: int) -> bool:
        return all(r.x + r.w <= base_w and r.y + r.h <= base_h for r, _ in self.rects)


@dataclass(frozen=True)
class WeakClassifier:
    feature: HaarFeature
    threshold: float
    polarity: int
    alpha: float

    def __post_init__(self) -> None:
        if self.polarity not in (-1, 1):
            raise InvariantViolation(f"polarity must be +-1, got {self.polarity}")
        if self.alpha < 0:
            raise InvariantViolation(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class CascadeStage:
    weak: tuple[WeakClassifier, ...]
    stage_threshold: float

    def __post_init__(self) -> None:
        if not self.weak:
            raise InvariantViolation("stage has no weak classifiers")


@dataclass(frozen=True)
class HaarCascade:
    base_w: int
    base_h: int
    stages: tuple[CascadeStage, ...]

    def __post_init__(self) -> None:
        if self.base_w <= 0 or self.base_h <= 0:
            raise InvariantViolation("nonpositive base window")
        if not self.stages:
            raise InvariantViolation("cascade has no stages")
        for stage in self.stages:
            for weak in stage.weak:
                if not weak.feature.fits(self.base_w, self.base_h):
                    raise InvariantViolation("feature outside base window")


@dataclass(frozen=True)
class Detection:
    box: Rect
    score: float


@dataclass(frozen=True)
class DetectParams:
    scale_factor: float = 1.2
    min_size: int = 0  # 0 means "base window size"
    step_fraction: float = 0.1

    def __post_init__(self) -> None:
        if self.scale_factor <= 1.0:
            raise ValueError("scale_factor must be > 1")
        if not 0.0 < self.step_fraction <= 1.0:
            raise ValueError("step_fraction must be in (0, 1]")


def _iround(v: float) -> int:
    return int(math.floor(v + 0.5))


def scale_rect_into_window(r: Rect, window: Rect, base_w: int, base_h: int) -> Rect:
    """Map a base-window rect into `window`, rounding to the pixel grid and
    clamping so the result stays inside the window."""
    fx = window.w / base_w
    fy = window.h / base_h
    x = min(_iround(r.x * fx), window.w - 1)
    y = min(_iround(r.y * fy), window.h - 1)
    w = max(1, _iround(r.w * fx))
    h = max(1, _iround(r.h * fy))
    w = min(w, window.w - x)
    h = min(h, window.h - y)
    return Rect(window.x + x, window.y + y, w, h)


def feature_value(
    ii: IntegralImage, f: HaarFeature, window: Rect, base_w: int, base_h: int
) -> float:
    """Weighted rect sums of the feature scaled into `window`, divided by
    the window area."""
    if window.x + window.w > ii.width or window.y + window.h > ii.height:
        raise OutOfBounds(f"window {window} outside {ii.width}x{ii.height}")
    total = 0
    for r, weight in f.rects:
        total += weight * rect_sum(ii, scale_rect_into_window(r, window, base_w, base_h))
    return total / window.area


def window_stddev(ii: IntegralImage, window: Rect) -> float:
    """Pixel standard deviation over `window`, clamped below at 1 so flat
    windows never blow up threshold scaling."""
    n = window.area
    s = rect_sum(ii, window)
    ss = rect_sum(ii, window, squared=True)
    mean = s / n
    var = ss / n - mean * mean
    sd = math.sqrt(max(0.0, var))
    return sd if sd >= 1.0 else 1.0


def stage_response(
    ii: IntegralImage, stage: CascadeStage, window: Rect, base_w: int, base_h: int
) -> float:
    """Sum of alpha votes over the stage's weak classifiers that fire."""
    sd = window_stddev(ii, window)
    resp = 0.0
    for weak in stage.weak:
        v = feature_value(ii, weak.feature, window, base_w, base_h)
        if weak.polarity * v < weak.polarity * weak.threshold * sd:
            resp += weak.alpha
    return resp


def eval_cascade(
    ii: IntegralImage, cascade: HaarCascade, window: Rect
) -> tuple[bool, float]:
    """Run the window through all stages with early rejection.

    Returns (accepted, margin) where margin is the last evaluated stage's
    response minus its threshold.
    """
    margin = 0.0
    for stage in cascade.stages:
        resp = stage_response(ii, stage, window, cascade.base_w, cascade.base_h)
        margin = resp - stage.stage_threshold
        if resp < stage.stage_threshold:
            return False, margin
    return True, margin


def enumerate_windows(
    img_w: int, img_h: int, cascade: HaarCascade, params: DetectParams
) -> list[Rect]:
    """Window sweep order shared by the detector and the test oracles:
    scale-major, then row-major."""
    min_size = params.min_size if params.min_size > 0 else min(cascade.base_w, cascade.base_h)
    windows: list[Rect] = []
    k = 0
    while True:
        f = params.scale_factor**k
        w = _iround(cascade.base_w * f)
        h = _iround(cascade.base_h * f)
        k += 1
        if w > img_w or h > img_h:
            break
        if min(w, h) < min_size:
            continue
        stride = max(1, _iround(params.step_fraction * w))
        for y in range(0, img_h - h + 1, stride):
            for x in range(0, img_w - w + 1, stride):
                windows.append(Rect(x, y, w, h))
    return windows


def detect_multiscale(
    img: GrayImage, cascade: HaarCascade, params: DetectParams | None = None
) -> list[Detection]:
    """All cascade-accepted windows over the scale pyramid, before NMS."""
    params = params or DetectParams()
    if img.width < cascade.base_w or img.height < cascade.base_h:
        raise ImageTooSmall(
            f"{img.width}x{img.height} below base {cascade.base_w}x{cascade.base_h}"
        )
    ii = integral(img)
    out = []
    for window in enumerate_windows(img.width, img.height, cascade, params):
        accepted, score = eval_cascade(ii, cascade, window)
        if accepted:
            out.append(Detection(box=window, score=score))
    return out


# --- non-maximum suppression ------------------------------------------------


def box_iou(a: Rect, b: Rect) -> float:
    ix = max(0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    iy = max(0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = ix * iy
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def nms(dets: list[Detection], iou_threshold: float) -> list[Detection]:
    """Greedy suppression by descending score; ties break on (x, y, w)."""
    ordered = sorted(dets, key=lambda d: (-d.score, d.box.x, d.box.y, d.box.w))
    kept: list[Detection] = []
    for det in ordered:
        if all(box_iou(det.box, k.box) <= iou_threshold for k in kept):
            kept.append(det)
    return kept


# --- decision stump + AdaBoost ----------------------------------------------


def _stump_scan(
    responses: np.ndarray, labels: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Best (threshold, polarity, error) per feature row.

    responses: (F, N) float64; labels: (N,) of +-1; weights: (N,) summing
    to 1. Candidate thresholds are midpoints of consecutive distinct sorted
    responses plus -inf/+inf sentinels; the vote convention is
    "predict +1 when polarity * x < polarity * threshold". Ties prefer the
    smaller threshold, then polarity +1.
    """
    F, N = responses.shape
    order = np.argsort(responses, axis=1, kind="stable")
    xs = np.take_along_axis(responses, order, axis=1)
    ys = np.take_along_axis(np.broadcast_to(labels, (F, N)), order, axis=1)
    return _stump_scan_sorted(xs, ys, order, weights)


def _stump_scan_sorted(
    xs: np.ndarray, ys: np.ndarray, order: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    F, N = xs.shape
    ws = weights[order]

    wpos = np.where(ys > 0, ws, 0.0)
    wneg = ws - wpos
    cum_pos = np.concatenate([np.zeros((F, 1)), np.cumsum(wpos, axis=1)], axis=1)
    cum_neg = np.concatenate([np.zeros((F, 1)), np.cumsum(wneg, axis=1)], axis=1)
    total_pos = cum_pos[:, -1:]
    total_neg = cum_neg[:, -1:]

    # cut k: first k sorted samples sit below the threshold
    err_p1 = cum_neg + (total_pos - cum_pos)  # fire(+1) below
    err_m1 = cum_pos + (total_neg - cum_neg)  # fire(+1) above

    thresholds = np.empty((F, N + 1))
    thresholds[:, 0] = -np.inf
    thresholds[:, -1] = np.inf
    mid = (xs[:, :-1] + xs[:, 1:]) / 2.0
    thresholds[:, 1:-1] = mid
    valid = np.ones((F, N + 1), dtype=bool)
    # a midpoint must strictly separate its neighbors; this also rejects
    # cuts inside equal runs and ulp-degenerate midpoints
    valid[:, 1:-1] = (mid > xs[:, :-1]) & (mid < xs[:, 1:])

    err_p1 = np.where(valid, err_p1, np.inf)
    err_m1 = np.where(valid, err_m1, np.inf)

    # interleave (cut asc, polarity +1 first) so argmin applies the tie-break
    stacked = np.stack([err_p1, err_m1], axis=2).reshape(F, 2 * (N + 1))
    flat_idx = np.argmin(stacked, axis=1)
    cut = flat_idx // 2
    pol = np.where(flat_idx % 2 == 0, 1, -1)
    best_err = stacked[np.arange(F), flat_idx]
    best_thr = thresholds[np.arange(F), cut]
    return best_thr, pol.astype(np.int64), best_err


def train_stump(
    feature_responses, labels, weights
) -> tuple[float, int, float]:
    """Exhaustive threshold/polarity scan minimizing weighted error."""
    x = np.asarray(feature_responses, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if not (x.shape == y.shape == w.shape) or x.ndim != 1 or x.size < 2:
        raise ValueError("need equal-length 1-d inputs with >= 2 samples")
    if not ((y == 1).any() and (y == -1).any()):
        raise DegenerateLabels("both classes required")
    thr, pol, err = _stump_scan(x[None, :], y, w)
    return float(thr[0]), int(pol[0]), float(err[0])


def stump_predict(responses: np.ndarray, threshold: float, polarity: int) -> np.ndarray:
    fire = polarity * responses < polarity * threshold
    return np.where(fire, 1, -1)


def generate_feature_bank(
    base_w: int = DEFAULT_BASE,
    base_h: int = DEFAULT_BASE,
    step: int = 2,
    cap: int = FEATURE_BANK_CAP,
) -> list[HaarFeature]:
    """Two-rect horizontal/vertical and three-rect horizontal features on a
    coarse grid (positions and sizes in multiples of `step`), capped."""
    bank: list[HaarFeature] = []

    def push(rects: list[tuple[Rect, int]]) -> bool:
        bank.append(HaarFeature(rects=tuple(rects)))
        return len(bank) >= cap

    sizes_w = range(step, base_w + 1, step)
    sizes_h = range(step, base_h + 1, step)
    for w in sizes_w:
        for h in sizes_h:
            for y in range(0, base_h - h + 1, step):
                for x in range(0, base_w - 2 * w + 1, step):
                    if push([(Rect(x, y, w, h), -1), (Rect(x + w, y, w, h), 1)]):
                        return bank
    for w in sizes_w:
        for h in sizes_h:
            for y in range(0, base_h - 2 * h + 1, step):
                for x in range(0, base_w - w + 1, step):
                    if push([(Rect(x, y, w, h), -1), (Rect(x, y + h, w, h), 1)]):
                        return bank
    for w in sizes_w:
        for h in sizes_h:
            for y in range(0, base_h - h + 1, step):
                for x in range(0, base_w - 3 * w + 1, step):
                    if push(
                        [
                            (Rect(x, y, w, h), 1),
                            (Rect(x + w, y, w, h), -2),
                            (Rect(x + 2 * w, y, w, h), 1),
                        ]
                    ):
                        return bank
    return bank


def _corner_tables(
    features: list[HaarFeature],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-feature flat corner indices and weights, rects padded to 3."""
    F = len(features)
    x0 = np.zeros((F, 3), dtype=np.int64)
    y0 = np.zeros((F, 3), dtype=np.int64)
    x1 = np.zeros((F, 3), dtype=np.int64)
    y1 = np.zeros((F, 3), dtype=np.int64)
    wt = np.zeros((F, 3), dtype=np.float64)
    for i, f in enumerate(features):
        for j, (r, w) in enumerate(f.rects):
            x0[i, j], y0[i, j] = r.x, r.y
            x1[i, j], y1[i, j] = r.x + r.w, r.y + r.h
            wt[i, j] = w
    return x0, y0, x1, y1, wt


def response_matrix(
    samples: list[IntegralImage], features: list[HaarFeature], block: int = 4000
) -> np.ndarray:
    """Variance-normalized, area-normalized responses, shape (F, N).

    Matches feature_value(...) / window_stddev(...) over the full base
    window of each sample crop; vectorized with flat gathers on the stacked
    sum tables.
    """
    if not features:
        raise EmptyFeatureBank("no features to evaluate")
    bw, bh = samples[0].width, samples[0].height
    for ii in samples:
        if (ii.width, ii.height) != (bw, bh):
            raise ValueError("all sample crops must share the base window size")
    for f in features:
        if not f.fits(bw, bh):
            raise InvariantViolation("feature outside base window")

    S = np.stack([ii.sums for ii in samples]).reshape(len(samples), -1)
    area = float(bw * bh)
    full = Rect(0, 0, bw, bh)
    sd = np.array([window_stddev(ii, full) for ii in samples])

    x0, y0, x1, y1, wt = _corner_tables(features)
    stride = bw + 1
    ia = y0 * stride + x0
    ib = y0 * stride + x1
    ic = y1 * stride + x0
    id_ = y1 * stride + x1

    F = len(features)
    R = np.empty((F, len(samples)))
    for lo in range(0, F, block):
        hi = min(lo + block, F)
        acc = np.zeros((len(samples), hi - lo))
        for j in range(3):
            w = wt[lo:hi, j]
            if not w.any():
                continue
            sums = (
                S[:, id_[lo:hi, j]] - S[:, ib[lo:hi, j]] - S[:, ic[lo:hi, j]] + S[:, ia[lo:hi, j]]
            )
            acc += w[None, :] * sums  # (N, B)
        R[lo:hi] = acc.T / area
    return R / sd[None, :]


def adaboost_train(
    samples: list[tuple[IntegralImage, int]],
    feature_bank: list[HaarFeature],
    rounds: int,
    round_hook=None,
) -> CascadeStage:
    """Discrete AdaBoost over threshold stumps on the feature bank.

    The stage threshold is set to the minimum stage response among training
    positives so every training positive passes the returned stage.
    """
    if not feature_bank:
        raise EmptyFeatureBank("empty feature bank")
    labels = np.array([lab for _, lab in samples], dtype=np.int64)
    if not ((labels == 1).any() and (labels == -1).any()):
        raise DegenerateLabels("both classes required")

    R = response_matrix([ii for ii, _ in samples], feature_bank)
    n = len(samples)

    # sort responses once; each boosting round only re-gathers the weights
    block = max(1, min(len(feature_bank), 64_000_000 // (8 * n)))
    cache = []
    for lo in range(0, R.shape[0], block):
        hi = min(lo + block, R.shape[0])
        order = np.argsort(R[lo:hi], axis=1, kind="stable")
        xs = np.take_along_axis(R[lo:hi], order, axis=1)
        ys = np.take_along_axis(np.broadcast_to(labels, xs.shape), order, axis=1)
        cache.append((lo, xs, ys, order))

    w = np.full(n, 1.0 / n)
    chosen: list[WeakClassifier] = []
    fired_alpha = np.zeros(n)
    for _ in range(rounds):
        best = -1
        best_err = np.inf
        best_thr = 0.0
        best_pol = 1
        for lo, xs, ys, order in cache:
            thr, pol, err = _stump_scan_sorted(xs, ys, order, w)
            i = int(np.argmin(err))
            if err[i] < best_err:  # strict: earliest feature index wins ties
                best, best_err = lo + i, float(err[i])
                best_thr, best_pol = float(thr[i]), int(pol[i])
        eps = min(max(best_err, 1e-10), 1.0 - 1e-10)
        alpha = 0.5 * math.log((1.0 - eps) / eps)
        pred = stump_predict(R[best], best_thr, best_pol)
        w = w * np.exp(-alpha * labels * pred)
        w /= w.sum()
        chosen.append(
            WeakClassifier(
                feature=feature_bank[best],
                threshold=best_thr,
                polarity=best_pol,
                alpha=alpha,
            )
        )
        fired_alpha += np.where(pred == 1, alpha, 0.0)
        if round_hook is not None:
            round_hook(len(chosen) - 1, w, chosen[-1])

    stage_thr = float(fired_alpha[labels == 1].min())
    return CascadeStage(weak=tuple(chosen), stage_threshold=stage_thr)


# --- cascade serialization ----------------------------------------------------


def save_cascade(cascade: HaarCascade) -> bytes:
    doc = {
        "format_version": 1,
        "base_w": cascade.base_w,
        "base_h": cascade.base_h,
        "stages": [
            {
                "threshold": stage.stage_threshold,
                "weak": [
                    {
                        "threshold": wk.threshold,
                        "polarity": wk.polarity,
                        "alpha": wk.alpha,
                        "rects": [[r.x, r.y, r.w, r.h, wgt] for r, wgt in wk.feature.rects],
                    }
                    for wk in stage.weak
                ],
            }
            for stage in cascade.stages
        ],
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def load_cascade(data: bytes) -> HaarCascade:
    try:
        doc = json.loads(data.decode("utf-8"))
        if doc.get("format_version") != 1:
            raise ParseError(f"unsupported format_version {doc.get('format_version')!r}")
        base_w = int(doc["base_w"])
        base_h = int(doc["base_h"])
        stages = []
        for s in doc["stages"]:
            weak = []
            for wk in s["weak"]:
                rects = tuple(
                    (Rect(int(x), int(y), int(w), int(h)), int(wgt))
                    for x, y, w, h, wgt in wk["rects"]
                )
                weak.append(
                    WeakClassifier(
                        feature=HaarFeature(rects=rects),
                        threshold=float(wk["threshold"]),
                        polarity=int(wk["polarity"]),
                        alpha=float(wk["alpha"]),
                    )
                )
            stages.append(CascadeStage(weak=tuple(weak), stage_threshold=float(s["threshold"])))
    except InvariantViolation:
        raise
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise ParseError(f"bad cascade document: {exc}") from exc
    return HaarCascade(base_w=base_w, base_h=base_h, stages=tuple(stages))
