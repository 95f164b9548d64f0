from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import torch
import torch.nn as nn

from ..errors import ConfigError
from ..frequency import highpass_mask, torch_grayscale, torch_highpass
from .adapter import LowRankAdapter
from .backbone import VitBackbone
from .decoder import PixelDecoder
from .ffrp import FeatureFrequencyPrompter, split_heads_channels
from .finp import FrequencyInputPrompter, stage_key

# backbone input normalisation for [0, 1] images
PIXEL_MEAN = 0.5
PIXEL_STD = 0.25


@dataclass
class MfptConfig:
    """Architecture hyper-parameters; defaults are the desk-scale model."""

    n_blocks: int = 8
    tap_stages: tuple = (2, 4, 6, 8)      # 1-based block indices
    patch_size: int = 8
    embed_channels: int = 64              # prompt width
    backbone_channels: int = 64           # frozen encoder width
    backbone_heads: int = 4
    head_count: int = 8                   # heads shared by the two FFrP branches
    freq_ratio: float = 0.75
    group_length: int = 4
    highpass_cutoff: float = 0.25
    adapter_rank: int = 8
    decoder_channels: int = 64
    input_size: tuple = (64, 64)          # (W, H)
    backbone_seed: int = 0
    init_seed: int = 0                    # trainable-parameter initialisation
    enable_finp: bool = True
    enable_ffrp: bool = True
    enable_adapter: bool = True

    def __post_init__(self):
        self.tap_stages = tuple(int(t) for t in self.tap_stages)
        self.input_size = tuple(int(s) for s in self.input_size)

    def validate(self) -> "MfptConfig":
        taps = self.tap_stages
        if self.n_blocks < 1:
            raise ConfigError("n_blocks must be positive")
        if not taps:
            raise ConfigError("tap_stages must not be empty")
        if any(b <= a for a, b in zip(taps, taps[1:])):
            raise ConfigError(f"tap_stages must be strictly increasing, got {list(taps)}")
        if taps[0] < 1 or taps[-1] > self.n_blocks:
            raise ConfigError(f"tap_stages must lie in [1, {self.n_blocks}], got {list(taps)}")
        if len(self.input_size) != 2:
            raise ConfigError("input_size must be (W, H)")
        W, H = self.input_size
        if W <= 0 or H <= 0 or W % self.patch_size or H % self.patch_size:
            raise ConfigError(f"patch size {self.patch_size} must divide input size {W}x{H}")
        if self.group_length < 1:
            raise ConfigError("group_length must be >= 1")
        if not 0.0 < self.highpass_cutoff < 1.0:
            raise ConfigError("highpass_cutoff must lie in (0, 1)")
        if self.adapter_rank < 1 or self.decoder_channels < 1 or self.embed_channels < 1:
            raise ConfigError("adapter_rank, decoder_channels and embed_channels must be positive")
        if self.backbone_channels % self.backbone_heads:
            raise ConfigError("backbone_channels must be divisible by backbone_heads")
        split_heads_channels(self.head_count, self.backbone_channels, self.freq_ratio)
        return self

    @property
    def grid(self) -> tuple[int, int]:
        W, H = self.input_size
        return H // self.patch_size, W // self.patch_size

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tap_stages"] = list(self.tap_stages)
        d["input_size"] = list(self.input_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MfptConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown model config key(s): {', '.join(unknown)}")
        return cls(**d)


class MFPT(nn.Module):
    """Frozen ViT with frequency input prompters, per-block adapters,
    feature frequency prompters at the tap stages and a pixel decoder.

    ``forward`` takes (B, 3, H, W) images with values in [0, 255] and returns
    (B, 2, H, W) logits; channel 1 is the "edited" class.
    """

    def __init__(self, config: MfptConfig | None = None):
        super().__init__()
        self.config = config = (config or MfptConfig()).validate()
        dim = config.backbone_channels
        self.backbone = VitBackbone(config.input_size, config.patch_size, dim,
                                    config.n_blocks, config.backbone_heads,
                                    seed=config.backbone_seed).freeze()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.init_seed)
            self.adapters = nn.ModuleList(LowRankAdapter(dim, config.adapter_rank)
                                          for _ in range(config.n_blocks))
            self.finp = FrequencyInputPrompter(config.tap_stages, config.patch_size,
                                               config.embed_channels, dim)
            self.ffrp = nn.ModuleDict({
                stage_key(n): FeatureFrequencyPrompter(dim, config.head_count, config.freq_ratio,
                                                       config.group_length)
                for n in config.tap_stages})
            self.decoder = PixelDecoder([dim] * len(config.tap_stages), config.decoder_channels)
        W, H = config.input_size
        self.register_buffer(
            "highpass", torch.from_numpy(highpass_mask(H, W, config.highpass_cutoff)),
            persistent=False)

    def train(self, mode=True):
        super().train(mode)
        self.backbone.eval()
        return self

    def prompt_image(self, images):
        """High-pass of the grayscale image, scaled like the backbone input."""
        return torch_highpass(torch_grayscale(images), self.highpass) / (255.0 * PIXEL_STD)

    def tap_features(self, images):
        """Run the encoder; returns the decoder inputs, one (B, L, C) tensor per tap."""
        cfg = self.config
        W, H = cfg.input_size
        if images.shape[-2:] != (H, W) or images.shape[1] != 3:
            raise ValueError(f"expected (B, 3, {H}, {W}) images, got {tuple(images.shape)}")
        x = self.backbone.embed((images / 255.0 - PIXEL_MEAN) / PIXEL_STD)
        prompt = self.prompt_image(images) if cfg.enable_finp else None
        taps = set(cfg.tap_stages)
        out = []
        for n, block in enumerate(self.backbone.blocks, start=1):
            if n in taps and cfg.enable_finp:
                x = self.finp(prompt, x, n)
            x = block(x)
            if cfg.enable_adapter:
                x = self.adapters[n - 1](x)
            if n in taps:
                out.append(self.ffrp[stage_key(n)](x) if cfg.enable_ffrp else x)
        return out

    def forward(self, images):
        feats = self.tap_features(images)
        return self.decoder(feats, [self.config.grid] * len(feats), images.shape[-2:])

    def backbone_parameters(self):
        return list(self.backbone.parameters())

    def trainable_parameters(self):
        frozen = {id(p) for p in self.backbone.parameters()}
        return [p for p in self.parameters() if p.requires_grad and id(p) not in frozen]

    def parameter_groups(self) -> dict[str, list[tuple[str, torch.nn.Parameter]]]:
        """Trainable parameters by component: finp, ffrp, tokens, adapters, decoder."""
        groups = {"finp": [], "ffrp": [], "tokens": [], "adapters": [], "decoder": []}
        for name, p in self.named_parameters():
            top = name.split(".", 1)[0]
            if top == "backbone":
                continue
            if top == "ffrp" and name.endswith(("filter_token", "match_token")):
                groups["tokens"].append((name, p))
            else:
                groups[top].append((name, p))
        return groups


def parameter_accounting(model: nn.Module) -> tuple[int, int, float]:
    """(total, trainable, trainable / total); backbone parameters never count as trainable."""
    backbone = getattr(model, "backbone", None)
    frozen = {id(p) for p in backbone.parameters()} if backbone is not None else set()
    total = sum(p.numel() for p in model.parameters())
    trainable = sum(p.numel() for p in model.parameters()
                    if p.requires_grad and id(p) not in frozen)
    return total, trainable, (trainable / total if total else 0.0)
