import numpy as np
import pytest
import torch
import torch.nn as nn

from conftest import tiny_config
from mfpt.errors import ConfigError
from mfpt.model import (
    MFPT,
    FeatureFrequencyPrompter,
    MfptConfig,
    load_backbone_weights,
    load_checkpoint,
    parameter_accounting,
    save_checkpoint,
)
from mfpt.model.checkpoint import write_archive
from mfpt.model.network import PIXEL_MEAN, PIXEL_STD


def _images(b=2, size=32, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.rand(b, 3, size, size, generator=g) * 255


def test_output_shape(tiny_model):
    assert tiny_model(_images()).shape == (2, 2, 32, 32)
    m = MFPT(tiny_config(input_size=(48, 32), tap_stages=(1, 2)))
    assert m(torch.rand(1, 3, 32, 48) * 255).shape == (1, 2, 32, 48)


def test_wrong_input_size(tiny_model):
    with pytest.raises(ValueError):
        tiny_model(torch.zeros(1, 3, 40, 32))


def test_eval_forward_is_deterministic(tiny_model):
    tiny_model.eval()
    x = _images()
    with torch.no_grad():
        assert torch.equal(tiny_model(x), tiny_model(x))


def test_same_seeds_same_model():
    a, b = MFPT(tiny_config()), MFPT(tiny_config())
    for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert na == nb and torch.equal(pa, pb)


@pytest.mark.parametrize("kw", [
    dict(tap_stages=(2, 1)), dict(tap_stages=(3,)), dict(patch_size=5),
    dict(freq_ratio=0.5), dict(group_length=0), dict(highpass_cutoff=1.0), dict(tap_stages=()),
])
def test_invalid_configs(kw):
    with pytest.raises(ConfigError):
        MFPT(tiny_config(**kw))


def test_config_dict_roundtrip():
    c = tiny_config()
    assert MfptConfig.from_dict(c.to_dict()) == c
    with pytest.raises(ConfigError):
        MfptConfig.from_dict({"bogus": 1})


def test_zeroed_prompts_reduce_to_backbone_reference():
    torch.manual_seed(3)
    m = MFPT(tiny_config()).double().eval()
    with torch.no_grad():
        for p in list(m.finp.parameters()) + list(m.adapters.parameters()):
            p.zero_()
        for p in m.decoder.parameters():
            p.normal_()
    m.decoder.activation = False
    x = _images().double()
    with torch.no_grad():
        # reference: frozen backbone alone, then the tap-stage gate, then the decoder
        feats = m.backbone.embed((x / 255 - PIXEL_MEAN) / PIXEL_STD)
        taps = []
        for n, block in enumerate(m.backbone.blocks, start=1):
            feats = block(feats)
            if n in m.config.tap_stages:
                taps.append(m.ffrp[f"stage{n}"](feats))
        ref = m.decoder(taps, [m.config.grid] * len(taps), (32, 32))
        assert (m(x) - ref).abs().max() < 1e-6

        # with the gate disabled the decoder sees raw backbone features
        m.config.enable_ffrp = False
        feats = m.backbone((x / 255 - PIXEL_MEAN) / PIXEL_STD)
        ref = m.decoder([feats], [m.config.grid], (32, 32))
        assert (m(x) - ref).abs().max() < 1e-6


def test_parameter_accounting_examples():
    class Toy(nn.Module):
        def __init__(self):
            super().__init__()
            self.backbone = nn.Linear(999, 1, bias=True)   # 1000 parameters
            self.head = nn.Linear(99, 1)                   # 100 parameters
            for p in self.backbone.parameters():
                p.requires_grad_(False)

    total, trainable, ratio = parameter_accounting(Toy())
    assert (total, trainable) == (1100, 100)
    assert ratio == pytest.approx(100 / 1100)

    toy = Toy()
    for p in toy.parameters():
        p.requires_grad_(False)
    assert parameter_accounting(toy)[1:] == (0, 0.0)


def test_backbone_never_counts_as_trainable(tiny_model):
    for p in tiny_model.backbone.parameters():
        p.requires_grad_(True)
    total, trainable, _ = parameter_accounting(tiny_model)
    assert trainable == sum(p.numel() for p in tiny_model.trainable_parameters())
    assert total - trainable == sum(p.numel() for p in tiny_model.backbone_parameters())


def test_full_scale_reference_ratio():
    # full-scale reference figures, not a desk-scale target
    assert round(27.62 / 331.86 * 100, 2) == 8.32


def test_frozen_backbone_contract():
    m = MFPT(tiny_config())
    m.train()
    x = _images(seed=4)
    target = (torch.rand(2, 32, 32) > 0.5).long()
    loss = nn.functional.cross_entropy(m(x), target)
    loss.backward()
    assert all(p.grad is None or not p.grad.any() for p in m.backbone_parameters())
    for group, params in m.parameter_groups().items():
        assert any(p.grad is not None and p.grad.abs().sum() > 0 for _, p in params), group
    names = [n for n, _ in m.parameter_groups()["finp"]]
    assert any("patch_embeds" in n for n in names)
    assert not m.backbone.training


def _max_rel_error(fn, tensors, h=1e-6):
    out = fn()
    grads = torch.autograd.grad(out, tensors)
    worst = 0.0
    for t, g in zip(tensors, grads):
        num = torch.zeros_like(t)
        flat = t.data.view(-1)
        for i in range(flat.numel()):
            orig = flat[i].item()
            flat[i] = orig + h
            plus = fn().item()
            flat[i] = orig - h
            minus = fn().item()
            flat[i] = orig
            num.view(-1)[i] = (plus - minus) / (2 * h)
        scale = max(num.abs().max().item(), 1e-8)
        worst = max(worst, (g - num).abs().max().item() / scale)
    return worst


def test_ffrp_gradients_match_finite_differences():
    torch.manual_seed(0)
    block = FeatureFrequencyPrompter(4, 4, 0.75, 4).double()
    assert block.split == (3, 1, 3, 1)
    with torch.no_grad():
        block.filter_token.normal_()
        block.match_token.normal_()
    x = torch.randn(2, 6, 4, dtype=torch.float64, requires_grad=True)
    w = torch.randn(2, 6, 4, dtype=torch.float64)
    tensors = [x] + list(block.parameters())
    assert _max_rel_error(lambda: (block(x) * w).sum(), tensors) <= 1e-4


def test_checkpoint_roundtrip(tmp_path, tiny_model):
    with torch.no_grad():
        for p in tiny_model.trainable_parameters():
            p.add_(torch.randn_like(p) * 0.1)
    save_checkpoint(tmp_path / "a.npz", tiny_model)
    save_checkpoint(tmp_path / "b.npz", tiny_model)
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    loaded = load_checkpoint(tmp_path / "a.npz")
    assert loaded.config == tiny_model.config
    for k, v in tiny_model.state_dict().items():
        assert torch.equal(v, loaded.state_dict()[k]), k
    x = _images()
    tiny_model.eval(), loaded.eval()
    with torch.no_grad():
        assert torch.equal(tiny_model(x), loaded(x))
    with np.load(tmp_path / "a.npz") as data:
        assert "finp.fm.stage2.fc1.weight" in data.files and "__config__" in data.files


def test_checkpoint_rejects_mismatch(tmp_path):
    arrays = {k: v.numpy() for k, v in MFPT(tiny_config()).state_dict().items()}
    arrays["__config__"] = np.array('{"n_blocks": 2, "tap_stages": [2], "patch_size": 8, '
                                    '"embed_channels": 16, "backbone_channels": 16, '
                                    '"backbone_heads": 2, "head_count": 4, "adapter_rank": 3, '
                                    '"decoder_channels": 8, "input_size": [32, 32]}')
    write_archive(tmp_path / "bad.npz", arrays)
    with pytest.raises(ConfigError, match="adapters"):
        load_checkpoint(tmp_path / "bad.npz")
    write_archive(tmp_path / "none.npz", {"x": np.zeros(2)})
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "none.npz")


def test_backbone_weight_import(tmp_path):
    donor = MFPT(tiny_config(backbone_seed=7))
    arrays = {f"backbone.{k}": v.numpy() for k, v in donor.backbone.state_dict().items()}
    write_archive(tmp_path / "vit.npz", arrays)
    m = MFPT(tiny_config())
    assert not torch.equal(m.backbone.pos_embed, donor.backbone.pos_embed)
    load_backbone_weights(m, tmp_path / "vit.npz")
    for k, v in donor.backbone.state_dict().items():
        assert torch.equal(v, m.backbone.state_dict()[k])
    assert not any(p.requires_grad for p in m.backbone_parameters())

    bare = {k: v.numpy() for k, v in donor.backbone.state_dict().items()}
    write_archive(tmp_path / "bare.npz", bare)
    load_backbone_weights(MFPT(tiny_config()), tmp_path / "bare.npz")

    bare["pos_embed"] = np.zeros((1, 3, 16), np.float32)
    write_archive(tmp_path / "wrong.npz", bare)
    with pytest.raises(ConfigError, match="pos_embed"):
        load_backbone_weights(MFPT(tiny_config()), tmp_path / "wrong.npz")
