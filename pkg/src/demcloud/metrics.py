"""Segmentation evaluation: confusion counts, IoU, PR stats, average precision.

All functions take plain {0,1} arrays (cloud = positive class) so they
compose with masks, network argmax output, and test fixtures alike. An
optional validity mask restricts which pixels are evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp,
            self.fn + other.fn, self.tn + other.tn,
        )


@dataclass(frozen=True)
class PrStats:
    precision: float | None  # None when tp+fp == 0 (undefined, not 0)
    recall: float | None
    accuracy: float | None


def _flatten(pred, truth, valid):
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DataError(f"dimension mismatch: pred {pred.shape} vs truth {truth.shape}")
    if valid is not None:
        valid = np.asarray(valid).astype(bool)
        if valid.shape != pred.shape:
            raise DataError(f"validity mask shape {valid.shape} does not match {pred.shape}")
        return pred[valid], truth[valid]
    return pred.ravel(), truth.ravel()


def confusion(pred, truth, valid=None) -> ConfusionMatrix:
    p, t = _flatten(pred, truth, valid)
    p = p.astype(bool)
    t = t.astype(bool)
    return ConfusionMatrix(
        tp=int((p & t).sum()),
        fp=int((p & ~t).sum()),
        fn=int((~p & t).sum()),
        tn=int((~p & ~t).sum()),
    )


def iou(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """(IoU_cloud, IoU_clear, mean IoU); an absent class scores 1 by 0/0 := 1."""
    denom_cloud = cm.tp + cm.fp + cm.fn
    denom_clear = cm.tn + cm.fp + cm.fn
    iou_cloud = cm.tp / denom_cloud if denom_cloud else 1.0
    iou_clear = cm.tn / denom_clear if denom_clear else 1.0
    return iou_cloud, iou_clear, (iou_cloud + iou_clear) / 2.0


def pr_stats(cm: ConfusionMatrix) -> PrStats:
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else None
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else None
    accuracy = (cm.tp + cm.tn) / cm.total if cm.total else None
    return PrStats(precision=precision, recall=recall, accuracy=accuracy)


def average_precision(conf, truth, valid=None) -> float | None:
    """Step-interpolated AP over the descending sweep of distinct confidences.

    At each distinct confidence value v the prediction is conf >= v. AP is
    sum_k (R_k - R_{k-1}) * P_k. Returns None when the truth contains no
    positive pixel (undefined).
    """
    c, t = _flatten(np.asarray(conf, dtype=np.float64), truth, valid)
    t = t.astype(bool)
    positives = int(t.sum())
    if positives == 0:
        return None
    order = np.argsort(-c, kind="stable")
    c_sorted = c[order]
    t_sorted = t[order]
    tp_cum = np.cumsum(t_sorted)
    ranks = np.arange(1, len(c_sorted) + 1)
    # threshold boundaries: the last index of each run of equal confidences
    last = np.nonzero(np.diff(c_sorted))[0]
    cut = np.concatenate([last, [len(c_sorted) - 1]])
    precision_k = tp_cum[cut] / ranks[cut]
    recall_k = tp_cum[cut] / positives
    prev_recall = np.concatenate([[0.0], recall_k[:-1]])
    return float(((recall_k - prev_recall) * precision_k).sum())


def mean_average_precision(aps) -> float | None:
    """Mean of the defined per-frame APs; None if every frame was undefined."""
    vals = [a for a in aps if a is not None]
    if not vals:
        return None
    return float(sum(vals) / len(vals))


def render_confusion(cm: ConfusionMatrix) -> str:
    """Small human-readable block for reports and --verbose output."""
    w = max(len(str(v)) for v in (cm.tp, cm.fp, cm.fn, cm.tn))
    return (
        f"{'':14s}{'pred cloud':>{w + 12}s}{'pred clear':>{w + 12}s}\n"
        f"{'true cloud':14s}{cm.tp:>{w + 12}d}{cm.fn:>{w + 12}d}\n"
        f"{'true clear':14s}{cm.fp:>{w + 12}d}{cm.tn:>{w + 12}d}"
    )
