"""Subset evaluation and degradation sweeps."""
from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping

import cv2
import numpy as np
import torch

from .data import SUBSETS, DatasetManifest
from .degrade import DegradationSpec, degrade
from .losses import edited_probability
from .metrics import binarize, score

DEFAULT_THRESHOLD = 0.5


@dataclass
class EvalReport:
    subset: str
    threshold: float
    n: int
    pF1: float | None
    IoU: float | None
    pACC: float | None
    per_image: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"subset": self.subset, "threshold": self.threshold, "n": self.n,
                "pF1": self.pF1, "IoU": self.IoU, "pACC": self.pACC,
                "per_image": self.per_image}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def select_subset(manifest: DatasetManifest, subset: str) -> DatasetManifest:
    """Samples evaluated under ``subset``.

    Subset tags in the manifest win. Without tags, DEAL-A / DEAL-E / DEAL-Full
    are the authentic / edited / all samples of the test split; split names
    and ``all`` select by split.
    """
    if subset == "all":
        return manifest
    if subset in ("train", "val", "test", "unassigned"):
        return manifest.filter(split=subset)
    if subset not in SUBSETS:
        raise ValueError(f"unknown subset {subset!r}")
    tagged = manifest.filter(subset=subset)
    if len(tagged) or manifest.subset_tags:
        return tagged
    test = manifest.filter(split="test")
    if subset == "DEAL-A":
        return test.filter(role="authentic")
    if subset == "DEAL-E":
        return test.filter(role="edited")
    if subset == "DEAL-Full":
        return test
    return tagged


def evaluate_subset(predictions: Mapping[str, np.ndarray], manifest: DatasetManifest,
                    subset: str, threshold: float = DEFAULT_THRESHOLD,
                    masks: Mapping[str, np.ndarray] | None = None) -> EvalReport:
    """Per-image metrics then arithmetic means.

    ``predictions`` maps sample id to a probability map. Authentic-only subsets
    aggregate pACC alone; any subset containing edits aggregates all three.
    Ground-truth masks are read from the manifest unless given in ``masks``.
    """
    samples = select_subset(manifest, subset).samples
    rows = []
    for s in samples:
        if s.id not in predictions:
            raise KeyError(f"no prediction for sample {s.id!r}")
        gt = masks[s.id] if masks is not None else manifest.load_mask(s)
        pred = binarize(predictions[s.id], threshold)
        pf1, iou, pacc = score(pred, gt)
        rows.append({"id": s.id, "pF1": pf1, "IoU": iou, "pACC": pacc})
    n = len(rows)
    authentic_only = n > 0 and all(not s.is_edited for s in samples)

    def mean(key):
        return float(np.mean([r[key] for r in rows])) if rows else None

    return EvalReport(subset=subset, threshold=threshold, n=n,
                      pF1=None if authentic_only else mean("pF1"),
                      IoU=None if authentic_only else mean("IoU"),
                      pACC=mean("pACC"), per_image=rows)


def resize_image(image: np.ndarray, size) -> np.ndarray:
    W, H = size
    if image.shape[:2] == (H, W):
        return image
    return cv2.resize(image, (W, H), interpolation=cv2.INTER_LINEAR)


def resize_mask(mask: np.ndarray, size) -> np.ndarray:
    W, H = size
    if mask.shape[:2] == (H, W):
        return mask
    return cv2.resize(mask, (W, H), interpolation=cv2.INTER_NEAREST)


@torch.no_grad()
def predict_probs(model, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
    """Edited-class probabilities for (N, H, W, 3) uint8 images -> (N, H, W) float64."""
    was_training = model.training
    model.eval()
    out = []
    try:
        for i in range(0, len(images), batch_size):
            batch = torch.from_numpy(np.ascontiguousarray(images[i:i + batch_size]))
            batch = batch.permute(0, 3, 1, 2).to(torch.float32)
            out.append(edited_probability(model(batch)).double().numpy())
    finally:
        model.train(was_training)
    if not out:
        H, W = images.shape[1:3] if images.ndim == 4 else (0, 0)
        return np.zeros((0, H, W))
    return np.concatenate(out)


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def load_images(manifest: DatasetManifest, samples, size, workers=1) -> np.ndarray:
    imgs = _map(lambda s: resize_image(manifest.load_image(s), size), samples, workers)
    W, H = size
    return np.stack(imgs) if imgs else np.zeros((0, H, W, 3), dtype=np.uint8)


def evaluate_model(model, manifest: DatasetManifest, subset: str,
                   threshold: float = DEFAULT_THRESHOLD, workers: int = 1,
                   degradation: tuple[str, int] | None = None) -> EvalReport:
    """Predict every sample of ``subset`` (optionally degraded) and evaluate."""
    size = model.config.input_size
    selected = select_subset(manifest, subset)
    images = load_images(manifest, selected.samples, size, workers)
    if degradation is not None:
        kind, level = degradation
        images = np.stack(_map(lambda im: degrade(im, kind, level), list(images), workers)) \
            if len(images) else images
    probs = predict_probs(model, images)
    masks = {s.id: resize_mask(manifest.load_mask(s), size) for s in selected.samples}
    preds = {s.id: p for s, p in zip(selected.samples, probs)}
    report = evaluate_subset(preds, selected, "all", threshold, masks=masks)
    report.subset = subset
    return report


def robustness_sweep(model, manifest: DatasetManifest, spec: DegradationSpec, subset: str = "all",
                     threshold: float = DEFAULT_THRESHOLD, workers: int = 1) -> list[tuple[int, float, float]]:
    """One (level, IoU, pF1) row per level, in the order given. Masks are never degraded."""
    rows = []
    for level in spec.levels:
        report = evaluate_model(model, manifest, subset, threshold, workers, (spec.kind, level))
        rows.append((level, report.IoU, report.pF1))
    return rows


def robustness_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["level", "IoU", "pF1"])
    for level, iou, pf1 in rows:
        writer.writerow([level, "" if iou is None else repr(iou), "" if pf1 is None else repr(pf1)])
    return buf.getvalue()
