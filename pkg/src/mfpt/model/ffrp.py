"""Feature frequency prompters.

Each tap stage's adapter output ``X_r`` (B, L, C) goes through two attention
branches:

* high-frequency: self-attention inside non-overlapping token groups,
* low-frequency: ``X_r`` queries average-pooled tokens (window = group length).

Their outputs are concatenated channel-wise into ``X_hlr`` which gates ``X_r``
token by token through a learnable filter token and matching matrix::

    s_l   = cos(X_hlr[l], t_filter)
    out_l = T_match @ (s_l * X_r[l])
"""
import math

import torch
import torch.nn as nn

from ..errors import ConfigError


def split_heads_channels(num_heads, channels, ratio):
    """Split heads and channels between the high and low frequency branches.

    Returns ``(h_high, h_low, c_high, c_low)``. ``h_high`` is ``r * num_heads``
    rounded half-up and clamped so the high branch always holds the majority.
    ``c_high`` is ``r * channels`` rounded, then moved to the nearest multiple of
    ``h_high`` (ties go up). With no low heads all channels go high.
    """
    if not 0.5 < ratio <= 1.0:
        raise ConfigError(f"freq_ratio must lie in (0.5, 1], got {ratio}")
    if num_heads < 1 or channels < 1:
        raise ConfigError("head and channel counts must be positive")
    h_high = math.floor(ratio * num_heads + 0.5)
    h_high = min(max(h_high, num_heads // 2 + 1), num_heads)
    h_low = num_heads - h_high
    if h_low == 0:
        if channels % h_high:
            raise ConfigError(f"{channels} channels cannot be split over {h_high} heads")
        return h_high, 0, channels, 0
    target = math.floor(ratio * channels + 0.5)
    below = (target // h_high) * h_high
    above = below + h_high
    c_high = above if above - target <= target - below else below
    c_low = channels - c_high
    if c_high <= 0 or c_low <= 0:
        raise ConfigError(
            f"no valid channel split for {channels} channels, heads ({h_high}, {h_low}), r={ratio}")
    if c_low % h_low:
        raise ConfigError(
            f"low-frequency branch gets {c_low} channels, not divisible by {h_low} heads "
            f"(channels={channels}, heads={num_heads}, r={ratio})")
    return h_high, h_low, c_high, c_low


def group_tokens(x, group_length):
    """(B, L, C) -> (B, G, g, C) with a zero-padded tail group, plus a (G, g) validity mask."""
    if group_length < 1:
        raise ValueError("group_length must be >= 1")
    B, L, C = x.shape
    groups = -(-L // group_length)
    pad = groups * group_length - L
    if pad:
        x = torch.cat([x, x.new_zeros(B, pad, C)], dim=1)
    valid = torch.arange(groups * group_length, device=x.device) < L
    return x.reshape(B, groups, group_length, C), valid.reshape(groups, group_length)


def ungroup_tokens(groups, length):
    """Inverse of :func:`group_tokens`: concatenate groups in order and strip padding."""
    B, G, g, C = groups.shape
    return groups.reshape(B, G * g, C)[:, :length]


def average_pool_tokens(x, window):
    """Mean over consecutive windows of tokens; the tail window averages what it has."""
    grouped, valid = group_tokens(x, window)
    counts = valid.sum(dim=1).to(x.dtype)
    return grouped.sum(dim=2) / counts[None, :, None]


def multihead_attention(q, k, v, num_heads, key_mask=None):
    """Scaled dot-product attention over the last two dims of (..., L, D) inputs."""
    *lead, Lq, D = q.shape
    Lk = k.shape[-2]
    hd = D // num_heads
    q = q.reshape(*lead, Lq, num_heads, hd).transpose(-3, -2)   # (..., nH, Lq, hd)
    k = k.reshape(*lead, Lk, num_heads, hd).transpose(-3, -2)
    v = v.reshape(*lead, Lk, num_heads, hd).transpose(-3, -2)
    attn = (q @ k.transpose(-2, -1)) * hd ** -0.5
    if key_mask is not None:
        attn = attn.masked_fill(~key_mask[..., None, None, :], float("-inf"))
    out = attn.softmax(dim=-1) @ v                                 # (..., nH, Lq, hd)
    return out.transpose(-3, -2).reshape(*lead, Lq, D)


class HighFrequencyBranch(nn.Module):
    def __init__(self, dim, channels, num_heads, group_length):
        super().__init__()
        self.num_heads = num_heads
        self.group_length = group_length
        self.qkv = nn.Linear(dim, channels * 3)

    def forward(self, x):
        L = x.shape[1]
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q, valid = group_tokens(q, self.group_length)
        k, _ = group_tokens(k, self.group_length)
        v, _ = group_tokens(v, self.group_length)
        # padded keys never receive attention
        out = multihead_attention(q, k, v, self.num_heads, key_mask=valid)
        return ungroup_tokens(out, L)


class LowFrequencyBranch(nn.Module):
    def __init__(self, dim, channels, num_heads, group_length):
        super().__init__()
        self.num_heads = num_heads
        self.group_length = group_length
        self.q = nn.Linear(dim, channels)
        self.kv = nn.Linear(dim, channels * 2)

    def forward(self, x):
        pooled = average_pool_tokens(x, self.group_length)
        k, v = self.kv(pooled).chunk(2, dim=-1)
        return multihead_attention(self.q(x), k, v, self.num_heads)


def frequency_gate(x_hlr, x_r, filter_token, match_token, eps=1e-8):
    """Per-token cosine gate followed by the matching matrix.

    Tokens whose norm (or the filter token's norm) is below ``eps`` get a zero gate.
    """
    if x_hlr.shape[-1] != filter_token.shape[-1] or x_r.shape[-1] != match_token.shape[-1]:
        raise ValueError("frequency token dimensions do not match the features")
    dot = (x_hlr * filter_token).sum(dim=-1)
    token_norm = x_hlr.norm(dim=-1)
    filter_norm = filter_token.norm()
    ok = (token_norm >= eps) & (filter_norm >= eps)
    denom = torch.where(ok, token_norm * filter_norm, torch.ones_like(token_norm))
    sim = torch.where(ok, dot / denom, torch.zeros_like(dot))
    return (sim.unsqueeze(-1) * x_r) @ match_token.transpose(0, 1)


class FeatureFrequencyPrompter(nn.Module):
    def __init__(self, dim, num_heads, ratio, group_length):
        super().__init__()
        h_high, h_low, c_high, c_low = split_heads_channels(num_heads, dim, ratio)
        self.split = (h_high, h_low, c_high, c_low)
        self.high = HighFrequencyBranch(dim, c_high, h_high, group_length)
        self.low = LowFrequencyBranch(dim, c_low, h_low, group_length) if h_low else None
        self.filter_token = nn.Parameter(torch.full((dim,), dim ** -0.5))
        self.match_token = nn.Parameter(torch.eye(dim))

    def branches(self, x_r):
        parts = [self.high(x_r)]
        if self.low is not None:
            parts.append(self.low(x_r))
        return torch.cat(parts, dim=-1)

    def forward(self, x_r):
        return frequency_gate(self.branches(x_r), x_r, self.filter_token, self.match_token)
