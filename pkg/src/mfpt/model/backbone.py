"""A small plain ViT encoder that stands in for a frozen foundation model.

Weights are drawn from a fixed seed so that every construction with the same
config yields the same frozen network. Real weights can be imported by name
with :func:`mfpt.model.checkpoint.load_backbone_weights`.
"""
import torch
import torch.nn as nn
import torch.nn.functional as F


class Attention(nn.Module):
    def __init__(self, dim, num_heads):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"dim {dim} not divisible by {num_heads} heads")
        self.num_heads = num_heads
        self.qkv = nn.Linear(dim, dim * 3)
        self.proj = nn.Linear(dim, dim)

    def forward(self, x):
        B, L, C = x.shape
        qkv = self.qkv(x).reshape(B, L, 3, self.num_heads, C // self.num_heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]                    # (B, nH, L, C//nH)
        attn = (q @ k.transpose(-2, -1)) * (C // self.num_heads) ** -0.5
        x = (attn.softmax(dim=-1) @ v).transpose(1, 2).reshape(B, L, C)
        return self.proj(x)


class Block(nn.Module):
    def __init__(self, dim, num_heads, mlp_ratio=4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, num_heads)
        self.norm2 = nn.LayerNorm(dim)
        self.fc1 = nn.Linear(dim, dim * mlp_ratio)
        self.fc2 = nn.Linear(dim * mlp_ratio, dim)

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.fc2(F.gelu(self.fc1(self.norm2(x))))


class VitBackbone(nn.Module):
    """Patch embedding + positional embedding + ``depth`` transformer blocks.

    Tokens are laid out as (B, L, C) in raster order of the patch grid.
    """

    def __init__(self, image_size, patch_size, dim, depth, num_heads, seed=0):
        super().__init__()
        width, height = image_size
        self.patch_size = patch_size
        self.grid = (height // patch_size, width // patch_size)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.patch_embed = nn.Conv2d(3, dim, kernel_size=patch_size, stride=patch_size)
            self.pos_embed = nn.Parameter(torch.randn(1, self.grid[0] * self.grid[1], dim) * 0.02)
            self.blocks = nn.ModuleList(Block(dim, num_heads) for _ in range(depth))

    def embed(self, images):
        """(B, 3, H, W) normalised images -> (B, L, C) tokens."""
        x = self.patch_embed(images).flatten(2).transpose(1, 2)
        return x + self.pos_embed

    def freeze(self):
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        return self

    def forward(self, images):
        x = self.embed(images)
        for blk in self.blocks:
            x = blk(x)
        return x
