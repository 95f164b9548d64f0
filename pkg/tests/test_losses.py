import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpt.losses import (
    LossWeights,
    bce_from_probs,
    bce_loss,
    dice_from_probs,
    dice_loss,
    edited_probability,
    total_loss,
)


def _hard_logits(mask, big=40.0):
    m = mask.double()
    return torch.stack([(1 - m) * big, m * big], dim=-3)


def _counts_mask():
    gt = torch.zeros(4, 4)
    gt[0, 0] = gt[0, 1] = gt[1, 1] = 1
    pred = torch.zeros(4, 4, dtype=torch.float64)
    pred[0, 0] = pred[0, 1] = pred[1, 0] = 1
    return pred, gt


def test_dice_hand_counts():
    pred, gt = _counts_mask()
    assert dice_from_probs(pred, gt).item() == pytest.approx(2 / 7, abs=1e-12)


def test_dice_total_miss_on_empty_mask():
    gt = torch.zeros(8, 8)
    assert dice_from_probs(1 - gt.double(), gt).item() == pytest.approx(1 - 1 / 65, abs=1e-12)


def test_hard_perfect_prediction():
    g = torch.Generator().manual_seed(0)
    gt = (torch.rand(64, 64, generator=g) > 0.7).long()
    assert gt.sum() >= 100
    logits = _hard_logits(gt)
    assert dice_loss(logits, gt).item() < 1e-3
    assert bce_loss(logits, gt).item() < 1e-6
    assert bce_from_probs(gt.double(), gt).item() == pytest.approx(-math.log(1 - 1e-7), rel=1e-6)


def test_bce_max_entropy():
    for mask in (torch.zeros(3, 5), torch.ones(3, 5), (torch.rand(3, 5) > 0.5).float()):
        p = torch.full((3, 5), 0.5, dtype=torch.float64)
        assert abs(bce_from_probs(p, mask).item() - math.log(2)) < 1e-9


def test_bce_four_term_example():
    mask = torch.tensor([[1.0, 0.0], [0.0, 0.0]])
    p = torch.tensor([[0.9, 0.1], [0.2, 0.3]], dtype=torch.float64)
    expected = (-math.log(0.9) - math.log(0.9) - math.log(0.8) - math.log(0.7)) / 4
    assert expected == pytest.approx(0.19763488164214868, abs=1e-15)
    assert bce_from_probs(p, mask).item() == pytest.approx(expected, abs=1e-12)


def test_total_loss_weights():
    g = torch.Generator().manual_seed(1)
    logits = torch.randn(2, 2, 8, 8, generator=g, dtype=torch.float64)
    mask = (torch.rand(2, 8, 8, generator=g) > 0.6).long()
    d, b = dice_loss(logits, mask).item(), bce_loss(logits, mask).item()
    assert total_loss(logits, mask, LossWeights(1, 0)).item() == pytest.approx(d, abs=1e-12)
    assert total_loss(logits, mask, LossWeights(0, 1)).item() == pytest.approx(b, abs=1e-12)
    assert total_loss(logits, mask, LossWeights(2, 3)).item() == pytest.approx(2 * d + 3 * b, abs=1e-12)
    assert LossWeights() == LossWeights(1.0, 1.0)
    with pytest.raises(ValueError):
        LossWeights(-1, 1)


def test_shape_mismatch():
    with pytest.raises(ValueError):
        dice_from_probs(torch.zeros(4, 4), torch.zeros(4, 5))
    with pytest.raises(ValueError):
        bce_from_probs(torch.zeros(4, 4), torch.zeros(5, 4))
    with pytest.raises(ValueError):
        edited_probability(torch.zeros(1, 3, 4, 4))


def test_batched_dice_is_mean_of_images():
    g = torch.Generator().manual_seed(2)
    p = torch.rand(3, 6, 6, generator=g, dtype=torch.float64)
    m = (torch.rand(3, 6, 6, generator=g) > 0.5).long()
    per = [dice_from_probs(p[i], m[i]).item() for i in range(3)]
    assert dice_from_probs(p, m).item() == pytest.approx(sum(per) / 3, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_losses_permutation_invariant_and_nonnegative(seed):
    g = torch.Generator().manual_seed(seed)
    logits = torch.randn(2, 6, 7, generator=g, dtype=torch.float64)
    mask = (torch.rand(6, 7, generator=g) > 0.5).long()
    perm = torch.randperm(42, generator=g)
    pl = logits.reshape(2, -1)[:, perm].reshape(2, 6, 7)
    pm = mask.reshape(-1)[perm].reshape(6, 7)
    for fn in (dice_loss, bce_loss):
        assert fn(logits, mask).item() == pytest.approx(fn(pl, pm).item(), abs=1e-12)
    assert total_loss(logits, mask).item() > 0
