"""Training loop with seeded batching and validation-based checkpoint selection."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
import torch

from .data import DatasetManifest
from .errors import ConfigError, ManifestError, NumericError
from .evaluation import evaluate_subset, load_images, predict_probs, resize_mask
from .losses import LossWeights, total_loss

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 0.01
    batch_size: int = 8
    max_iterations: int = 1000
    seed: int = 0
    eval_interval: int = 100
    lambda_dice: float = 1.0
    lambda_ce: float = 1.0
    threshold: float = 0.5
    train_split: str = "train"
    val_split: str = "val"

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)

    def validate(self) -> "TrainConfig":
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")
        if self.eval_interval < 1:
            raise ConfigError("eval_interval must be positive")
        if len(self.betas) != 2:
            raise ConfigError("betas must be a pair")
        LossWeights(self.lambda_dice, self.lambda_ce)
        return self

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(self.lambda_dice, self.lambda_ce)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["betas"] = list(self.betas)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown train config key(s): {', '.join(unknown)}")
        return cls(**d)


@dataclass
class TrainResult:
    initial_state: dict
    best_state: dict
    best_iteration: int | None
    losses: list[tuple[int, float]] = field(default_factory=list)
    val_trace: list[tuple[int, float]] = field(default_factory=list)


def select_best_checkpoint(trace) -> int:
    """Iteration with the highest validation pF1; the earliest wins ties."""
    trace = list(trace)
    if not trace:
        raise ValueError("empty validation trace")
    best_it, best = trace[0]
    for it, value in trace[1:]:
        if value > best:
            best_it, best = it, value
    return best_it


def _snapshot(model) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def load_split(manifest: DatasetManifest, split: str, size, workers=1, role=None):
    """(images uint8 (N, H, W, 3), masks uint8 (N, H, W), samples) resized to ``size``."""
    part = manifest.filter(split=split, role=role)
    if not len(part):
        raise ManifestError(f"manifest has no samples in split {split!r}")
    images = load_images(manifest, part.samples, size, workers)
    masks = np.stack([resize_mask(manifest.load_mask(s), size) for s in part.samples])
    return images, masks, part


def mean_pf1(model, images, masks, samples, threshold) -> float:
    probs = predict_probs(model, images)
    preds = {s.id: p for s, p in zip(samples, probs)}
    gts = {s.id: m for s, m in zip(samples, masks)}
    return evaluate_subset(preds, samples, "all", threshold, masks=gts).pF1


def train(model, manifest: DatasetManifest, config: TrainConfig, workers: int = 1) -> TrainResult:
    """Optimise the non-backbone parameters with AdamW on the train split.

    Validation pF1 is measured every ``eval_interval`` iterations and at the
    last one, on the edited validation samples (all of them if none are
    edited, since authentic images only reward empty predictions); the best
    state is kept in memory.
    """
    config.validate()
    size = model.config.input_size
    train_images, train_masks, _ = load_split(manifest, config.train_split, size, workers)
    val_images = val_masks = val_part = None
    if config.max_iterations:
        val = manifest.filter(split=config.val_split)
        role = "edited" if any(s.is_edited for s in val) else None
        val_images, val_masks, val_part = load_split(manifest, config.val_split, size, workers, role)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    params = model.trainable_parameters()
    optimizer = torch.optim.AdamW(params, lr=config.learning_rate, betas=config.betas,
                                  weight_decay=config.weight_decay)
    weights = config.loss_weights
    x_all = torch.from_numpy(train_images).permute(0, 3, 1, 2).to(torch.float32)
    m_all = torch.from_numpy(train_masks).to(torch.float32)

    result = TrainResult(initial_state=_snapshot(model), best_state={}, best_iteration=None)
    best_score = -math.inf
    order = np.empty(0, dtype=np.int64)
    model.train()
    for it in range(1, config.max_iterations + 1):
        if len(order) < config.batch_size:
            order = np.concatenate([order, rng.permutation(len(x_all))])
        idx, order = order[:config.batch_size], order[config.batch_size:]
        idx = torch.from_numpy(idx)
        loss = total_loss(model(x_all[idx]), m_all[idx], weights)
        if not torch.isfinite(loss):
            raise NumericError(f"non-finite loss {loss.item()} at iteration {it}")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
        result.losses.append((it, float(loss.item())))

        if it % config.eval_interval == 0 or it == config.max_iterations:
            pf1 = mean_pf1(model, val_images, val_masks, val_part, config.threshold)
            result.val_trace.append((it, pf1))
            log.info("iteration %d  loss %.4f  val pF1 %.4f", it, loss.item(), pf1)
            if pf1 > best_score:
                best_score = pf1
                result.best_state = _snapshot(model)
                result.best_iteration = it

    if result.best_iteration is None:
        result.best_state = result.initial_state
    return result


def write_trace(path, result: TrainResult) -> None:
    """CSV with one row per iteration: iteration, train_loss, val_pf1 (blank when not evaluated)."""
    val = dict(result.val_trace)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "train_loss", "val_pf1"])
        for it, loss in result.losses:
            writer.writerow([it, repr(loss), repr(val[it]) if it in val else ""])
