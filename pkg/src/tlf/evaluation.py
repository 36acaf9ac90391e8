"""Detection, tracking, timeline and HCP metrics, plus K-fold threshold search."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import (
    Activity,
    ActivityTimeline,
    BoundingBox,
    ObjectCategory,
    RegionSpec,
    ValidationError,
)

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------- detection


def _xywh(box) -> tuple[float, float, float, float]:
    if isinstance(box, BoundingBox):
        return box.x, box.y, box.w, box.h
    x, y, w, h = box[:4]
    return x, y, w, h


def iou(a, b) -> float:
    """Intersection over union of two ``(x, y, w, h)`` boxes."""
    ax, ay, aw, ah = _xywh(a)
    bx, by, bw, bh = _xywh(b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValidationError("iou is undefined for zero-area boxes")
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """Area under the PR curve with the all-points interpolated envelope."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


@dataclass
class CategoryAP:
    category: ObjectCategory
    ap: float
    tp: int
    fp: int
    n_truth: int
    recall: np.ndarray = field(repr=False)
    precision: np.ndarray = field(repr=False)
    flags: tuple[str, ...] = ()


@dataclass
class DetectionEvalReport:
    per_category: dict[ObjectCategory, CategoryAP]
    map50: float
    iou_thresh: float = 0.5


def _frame_boxes(frame) -> Sequence[BoundingBox]:
    return frame.boxes if hasattr(frame, "boxes") else frame


def evaluate_detections(predictions: Sequence, truth: Sequence, iou_thresh: float = 0.5,
                        min_confidence: float = 0.0) -> DetectionEvalReport:
    """VOC-style AP per category, TP/FP counts and mAP.

    ``predictions`` and ``truth`` are frame-aligned sequences of box lists
    (or detection records). Within a category, predictions are visited by
    descending confidence; each takes the truth box in its frame with the
    highest IoU. At IoU >= ``iou_thresh`` it is a TP unless that truth box
    is already taken (then FP); otherwise FP.
    """
    if len(predictions) != len(truth):
        raise ValidationError(f"{len(predictions)} prediction frames vs {len(truth)} truth frames")
    cats = set()
    for frame in list(predictions) + list(truth):
        cats.update(b.category for b in _frame_boxes(frame))
    per_cat = {}
    for cat in (c for c in ObjectCategory if c in cats):
        gt = {i: [b for b in _frame_boxes(f) if b.category is cat] for i, f in enumerate(truth)}
        n_truth = sum(len(v) for v in gt.values())
        preds = [(b.confidence, i, b) for i, f in enumerate(predictions)
                 for b in _frame_boxes(f) if b.category is cat and b.confidence >= min_confidence]
        # deterministic order independent of input order
        preds.sort(key=lambda p: (-p[0], p[1], p[2].y, p[2].x, p[2].h, p[2].w))
        taken = {i: [False] * len(v) for i, v in gt.items()}
        tp = np.zeros(len(preds))
        fp = np.zeros(len(preds))
        for k, (_, i, box) in enumerate(preds):
            overlaps = [iou(box, g) for g in gt[i]]
            if overlaps and max(overlaps) >= iou_thresh:
                j = int(np.argmax(overlaps))
                if not taken[i][j]:
                    taken[i][j] = True
                    tp[k] = 1
                else:
                    fp[k] = 1
            else:
                fp[k] = 1
        ctp, cfp = np.cumsum(tp), np.cumsum(fp)
        precision = ctp / np.maximum(ctp + cfp, np.finfo(float).eps)
        flags = ()
        if n_truth == 0:
            recall = np.zeros(len(preds))
            ap = 0.0
            flags = ("no_truth",)
            logger.warning("%s: predictions without truth boxes; AP set to 0", cat.value)
        else:
            recall = ctp / n_truth
            ap = average_precision(recall, precision) if len(preds) else 0.0
        per_cat[cat] = CategoryAP(cat, ap, int(tp.sum()), int(fp.sum()), n_truth,
                                  recall, precision, flags)
    map50 = float(np.mean([c.ap for c in per_cat.values()])) if per_cat else 0.0
    return DetectionEvalReport(per_cat, map50, iou_thresh)


# ---------------------------------------------------------------- tracking


def p_measure(predicted: Sequence, truth: Sequence) -> float:
    """Percentage of samples where prediction and truth agree exactly."""
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ValidationError(f"series lengths differ: {predicted.shape} vs {truth.shape}")
    if predicted.size == 0:
        raise ValidationError("empty series")
    return 100.0 * int(np.count_nonzero(predicted == truth)) / predicted.size


def _interval_mask(interval, n: int, timestamps=None) -> np.ndarray:
    start, end = interval
    if not start < end:
        raise ValidationError(f"empty interval {interval!r}")
    if timestamps is None:
        idx = np.arange(n)
    else:
        idx = np.asarray(timestamps, dtype=float)
    return (idx >= start) & (idx < end)


def activity_detected_during(interval, coverage: Sequence[bool], timestamps=None,
                             min_fraction: float = 0.8) -> bool:
    """True when the object is covered on strictly more than ``min_fraction`` of the interval.

    ``interval`` is a ``[start, end)`` frame range, or seconds when
    ``timestamps`` gives the per-frame clock.
    """
    coverage = np.asarray(coverage, dtype=bool)
    mask = _interval_mask(interval, len(coverage), timestamps)
    if not mask.any():
        raise ValidationError(f"interval {interval!r} holds no frames")
    return float(coverage[mask].mean()) > min_fraction


def region_coverage(region: RegionSpec, truth_boxes: Sequence, category: ObjectCategory) -> np.ndarray:
    """Per frame: does the true object's center fall inside the proposed region?"""
    category = ObjectCategory(category)
    out = np.zeros(len(truth_boxes), dtype=bool)
    for i, frame in enumerate(truth_boxes):
        boxes = [b for b in _frame_boxes(frame) if b.category is category]
        out[i] = any(region.contains(i, b.center) for b in boxes)
    return out


def object_detection_rate(intervals, coverage, timestamps=None) -> tuple[int, int, float]:
    """``(# detected, # intervals, percentage)`` over activity intervals."""
    hits = [activity_detected_during(iv, coverage, timestamps) for iv in intervals]
    if not hits:
        return 0, 0, float("nan")
    return sum(hits), len(hits), 100.0 * sum(hits) / len(hits)


# ---------------------------------------------------------------- timelines


def rasterize(intervals, n: int, period_s: float = 1.0) -> np.ndarray:
    """Sample ``k`` is positive when its midpoint lies in some ``[start, end)``."""
    mid = (np.arange(n) + 0.5) * period_s
    out = np.zeros(n, dtype=np.int8)
    for start, end in intervals:
        out[(mid >= start) & (mid < end)] = 1
    return out


@dataclass
class TimelineEvalReport:
    activity: Activity | None
    tp: int
    tn: int
    fp: int
    fn: int
    precision: float
    recall: float
    accuracy: float
    f1: float
    flags: tuple[str, ...] = ()


def confusion(pred, truth) -> tuple[int, int, int, int]:
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape:
        raise ValidationError("prediction and truth lengths differ")
    return (int(np.sum(pred & truth)), int(np.sum(~pred & ~truth)),
            int(np.sum(pred & ~truth)), int(np.sum(~pred & truth)))


def metrics_from_counts(tp: int, tn: int, fp: int, fn: int, activity=None) -> TimelineEvalReport:
    """Precision, recall, accuracy and F1; an undefined ratio is reported as 0 and flagged."""
    flags = []
    if tp + fp:
        precision = tp / (tp + fp)
    else:
        precision = 0.0
        flags.append("precision_undefined")
    if tp + fn:
        recall = tp / (tp + fn)
    else:
        recall = 0.0
        flags.append("recall_undefined")
    total = tp + tn + fp + fn
    accuracy = (tp + tn) / total if total else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return TimelineEvalReport(activity, tp, tn, fp, fn, precision, recall, accuracy, f1, tuple(flags))


def evaluate_timeline(timeline: ActivityTimeline, intervals) -> TimelineEvalReport:
    truth = rasterize(intervals, len(timeline), timeline.sample_period_s)
    return metrics_from_counts(*confusion(timeline.binary, truth), activity=timeline.activity)


# ---------------------------------------------------------------- HCP count


def quartiles(values) -> tuple[float, float, float]:
    """25th, 50th and 75th percentiles, linear interpolation between order statistics."""
    q = np.percentile(np.asarray(values, dtype=float), [25, 50, 75])
    return float(q[0]), float(q[1]), float(q[2])


@dataclass
class HcpEvalReport:
    p_mean: float
    p_quartiles: tuple[float, float, float]
    e_mean: float
    e_quartiles: tuple[float, float, float]
    per_episode_p: list[float]
    per_episode_e: list[float]


def evaluate_hcp(pairs: Sequence) -> HcpEvalReport:
    """Aggregate per-episode exact-count rate and mean absolute count error.

    Args:
        pairs: ``(estimated, truth)`` per episode; ``estimated`` may be an
            :class:`HcpTimeline` or a count sequence.
    """
    ps, es = [], []
    for est, truth in pairs:
        est = np.asarray(getattr(est, "counts", est))
        truth = np.asarray(truth)
        ps.append(p_measure(est, truth))
        es.append(float(np.mean(np.abs(est - truth))))
    if not ps:
        raise ValidationError("no episodes to evaluate")
    return HcpEvalReport(float(np.mean(ps)), quartiles(ps), float(np.mean(es)), quartiles(es), ps, es)


# ---------------------------------------------------------------- K-fold


def threshold_grid(step: float = 0.01) -> np.ndarray:
    return np.round(np.arange(0.0, 1.0 + step / 2, step), 10)


def f1_curve(probs, truth, thresholds) -> np.ndarray:
    """F1 of ``probs > t`` against ``truth`` for every ``t`` in ``thresholds``."""
    probs = np.asarray(probs, dtype=float)
    truth = np.asarray(truth).astype(bool)
    pred = probs[None, :] > np.asarray(thresholds)[:, None]
    tp = (pred & truth).sum(axis=1)
    fp = (pred & ~truth).sum(axis=1)
    fn = (~pred & truth).sum(axis=1)
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


@dataclass
class FoldResult:
    fold: int
    held_out: tuple[int, ...]
    threshold: float
    train_f1: float
    precision: float
    recall: float
    accuracy: float
    f1: float


@dataclass
class KfcvReport:
    activity: Activity | None
    folds: list[FoldResult]
    skipped: list[int]
    mean_precision: float
    mean_recall: float
    mean_accuracy: float
    mean_f1: float
    threshold_quartiles: tuple[float, float, float]

    @property
    def quartile_label(self) -> str:
        return format_quartiles(self.threshold_quartiles)


def format_quartiles(q) -> str:
    """Render like ``.34, .34, .34``."""
    def one(v):
        s = f"{v:.2f}"
        return s[1:] if s.startswith("0.") else s
    return ", ".join(one(v) for v in q)


def kfcv_threshold(videos: Sequence, activity: Activity | None = None, grid_step: float = 0.01,
                   k: int | None = None) -> KfcvReport:
    """Cross-validated choice of the detection threshold.

    Args:
        videos: ``(probs, truth)`` per video, both per-second series.
        k: number of folds; ``None`` gives one fold per video.

    For each fold the threshold with the highest F1 over the pooled seconds
    of the remaining videos is chosen (lowest threshold on ties) and the
    held-out videos are scored with it.
    """
    if len(videos) < 2:
        raise ValidationError("K-fold threshold search needs at least two videos")
    k = len(videos) if k is None else int(k)
    if not 2 <= k <= len(videos):
        raise ValidationError(f"fold count {k} must lie in [2, {len(videos)}]")
    data = []
    for probs, truth in videos:
        probs, truth = np.asarray(probs, dtype=float), np.asarray(truth).astype(bool)
        if probs.shape != truth.shape:
            raise ValidationError("probability and truth series differ in length")
        data.append((probs, truth))
    grid = threshold_grid(grid_step)
    folds, skipped = [], []
    for f, held in enumerate(np.array_split(np.arange(len(data)), k)):
        train = [i for i in range(len(data)) if i not in set(held)]
        tp_probs = np.concatenate([data[i][0] for i in train])
        tp_truth = np.concatenate([data[i][1] for i in train])
        if not tp_truth.any():
            logger.warning("fold %d: activity absent from training videos; skipped", f)
            skipped.append(f)
            continue
        curve = f1_curve(tp_probs, tp_truth, grid)
        best = int(np.argmax(curve))
        t = float(grid[best])
        hp = np.concatenate([data[i][0] for i in held])
        ht = np.concatenate([data[i][1] for i in held])
        m = metrics_from_counts(*confusion(hp > t, ht))
        folds.append(FoldResult(f, tuple(int(i) for i in held), t, float(curve[best]),
                                m.precision, m.recall, m.accuracy, m.f1))
    if not folds:
        raise ValidationError("every fold was skipped")
    mean = lambda attr: float(np.mean([getattr(r, attr) for r in folds]))  # noqa: E731
    return KfcvReport(activity, folds, skipped, mean("precision"), mean("recall"),
                      mean("accuracy"), mean("f1"), quartiles([r.threshold for r in folds]))
