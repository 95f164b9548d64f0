"""Dice + binary cross-entropy objective on 2-channel logits."""
from dataclasses import dataclass

import torch

DICE_SMOOTH = 1.0
PROB_CLAMP = 1e-7


@dataclass(frozen=True)
class LossWeights:
    lambda_dice: float = 1.0
    lambda_ce: float = 1.0

    def __post_init__(self):
        if self.lambda_dice < 0 or self.lambda_ce < 0:
            raise ValueError("loss weights must be non-negative")


def edited_probability(logits):
    """Softmax probability of the edited class from (B, 2, H, W) or (2, H, W) logits."""
    if logits.shape[-3] != 2:
        raise ValueError(f"expected 2 logit channels, got shape {tuple(logits.shape)}")
    return logits.softmax(dim=-3).select(-3, 1)


def _check(p, mask):
    if p.shape != mask.shape:
        raise ValueError(f"prediction {tuple(p.shape)} and mask {tuple(mask.shape)} differ")


def dice_from_probs(p, mask, smooth=DICE_SMOOTH):
    """Soft Dice loss; batched inputs (B, H, W) give the mean of per-image losses."""
    _check(p, mask)
    mask = mask.to(p.dtype)
    dims = (-2, -1)
    inter = (p * mask).sum(dim=dims)
    loss = 1 - (2 * inter + smooth) / (p.sum(dim=dims) + mask.sum(dim=dims) + smooth)
    return loss.mean()


def bce_from_probs(p, mask, clamp=PROB_CLAMP):
    _check(p, mask)
    mask = mask.to(p.dtype)
    p = p.clamp(clamp, 1 - clamp)
    return -(mask * torch.log(p) + (1 - mask) * torch.log1p(-p)).mean()


def dice_loss(logits, mask):
    return dice_from_probs(edited_probability(logits), mask)


def bce_loss(logits, mask):
    return bce_from_probs(edited_probability(logits), mask)


def total_loss(logits, mask, weights: LossWeights = LossWeights()):
    p = edited_probability(logits)
    return weights.lambda_dice * dice_from_probs(p, mask) + weights.lambda_ce * bce_from_probs(p, mask)
