"""Frequency input prompters.

At every tap block ``n`` (stage ``m``) a high-pass prompt image is patch
embedded and fused with the previous adapter output::

    X_f = f_s(f_m(X_h + X_prev))
    X_n = X_f + X_prev

``f_m`` is per stage, ``f_s`` is shared by all stages.
"""
import torch.nn as nn
import torch.nn.functional as F


def stage_key(n):
    return f"stage{n}"


class Mlp(nn.Module):
    def __init__(self, dim, hidden=None, activation=True):
        super().__init__()
        hidden = hidden or dim
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, dim)
        self.activation = activation

    def forward(self, x):
        x = self.fc1(x)
        if self.activation:
            x = F.gelu(x)
        return self.fc2(x)


class PromptPatchEmbed(nn.Module):
    """Flatten non-overlapping P x P patches of a 1-channel image and project to C."""

    def __init__(self, patch_size, dim):
        super().__init__()
        self.patch_size = patch_size
        self.proj = nn.Linear(patch_size * patch_size, dim)

    def forward(self, prompt):
        # prompt: (B, 1, H, W)
        B, _, H, W = prompt.shape
        P = self.patch_size
        if H % P or W % P:
            raise ValueError(f"patch size {P} does not divide {H}x{W}")
        patches = prompt.reshape(B, H // P, P, W // P, P).permute(0, 1, 3, 2, 4)
        return self.proj(patches.reshape(B, (H // P) * (W // P), P * P))


class FrequencyInputPrompter(nn.Module):
    def __init__(self, stages, patch_size, prompt_dim, feature_dim):
        super().__init__()
        self.stages = tuple(stages)
        self.patch_embeds = nn.ModuleDict(
            {stage_key(n): PromptPatchEmbed(patch_size, prompt_dim) for n in self.stages})
        self.fm = nn.ModuleDict({stage_key(n): Mlp(prompt_dim) for n in self.stages})
        self.fs = Mlp(prompt_dim)
        if prompt_dim == feature_dim:
            self.to_prompt = nn.Identity()
            self.from_prompt = nn.Identity()
        else:
            self.to_prompt = nn.Linear(feature_dim, prompt_dim)
            self.from_prompt = nn.Linear(prompt_dim, feature_dim)

    def embed(self, prompt, n):
        return self.patch_embeds[stage_key(n)](prompt)

    def fuse(self, x_h, x_prev, n):
        x_prev = self.to_prompt(x_prev)
        if x_h.shape != x_prev.shape:
            raise ValueError(f"prompt tokens {tuple(x_h.shape)} vs features {tuple(x_prev.shape)}")
        return self.fs(self.fm[stage_key(n)](x_h + x_prev))

    def inject(self, x_f, x_prev):
        x_f = self.from_prompt(x_f)
        if x_f.shape != x_prev.shape:
            raise ValueError(f"prompt feature {tuple(x_f.shape)} vs features {tuple(x_prev.shape)}")
        return x_f + x_prev

    def forward(self, prompt, x_prev, n):
        return self.inject(self.fuse(self.embed(prompt, n), x_prev, n), x_prev)
