"""Pixel-level localisation metrics with "edited" as the positive class."""
from typing import NamedTuple

import numpy as np


class ConfusionCounts(NamedTuple):
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


class PixelScores(NamedTuple):
    pf1: float
    iou: float
    pacc: float


def binarize(prob, threshold: float = 0.5) -> np.ndarray:
    """1 where ``prob >= threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return (np.asarray(prob) >= threshold).astype(np.uint8)


def confusion(pred, gt) -> ConfusionCounts:
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    tp = int(np.count_nonzero(pred & gt))
    fp = int(np.count_nonzero(pred & ~gt))
    fn = int(np.count_nonzero(~pred & gt))
    return ConfusionCounts(tp, fp, fn, pred.size - tp - fp - fn)


def metrics(c: ConfusionCounts) -> PixelScores:
    """pF1, IoU and pACC. Both masks empty scores 1 on every metric."""
    tp, fp, fn, tn = c
    if tp + fp + fn == 0:
        pf1 = iou = 1.0
    else:
        pf1 = 2 * tp / (2 * tp + fp + fn)
        iou = tp / (tp + fp + fn)
    total = tp + fp + fn + tn
    pacc = (tp + tn) / total if total else 1.0
    return PixelScores(pf1, iou, pacc)


def score(pred, gt) -> PixelScores:
    return metrics(confusion(pred, gt))
