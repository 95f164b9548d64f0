import torch.nn as nn
import torch.nn.functional as F


class PixelDecoder(nn.Module):
    """Lightweight multi-scale decoder producing 2-channel logits.

    Every tap feature is projected to ``channels``, resized to the finest tap
    grid and summed; two 3x3 conv layers mix the result, a 1x1 head gives the
    two class logits, and a bilinear resize brings them to the image size.
    """

    def __init__(self, in_dims, channels, num_classes=2, activation=True):
        super().__init__()
        self.norms = nn.ModuleList(nn.LayerNorm(d) for d in in_dims)
        self.proj = nn.ModuleList(nn.Linear(d, channels) for d in in_dims)
        self.mix1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.gn1 = nn.GroupNorm(8 if channels % 8 == 0 else 1, channels)
        self.mix2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.gn2 = nn.GroupNorm(8 if channels % 8 == 0 else 1, channels)
        self.head = nn.Conv2d(channels, num_classes, 1)
        self.activation = activation

    def _act(self, x):
        return F.gelu(x) if self.activation else x

    def forward(self, features, grids, out_size):
        """``features[i]`` is (B, L_i, C_i) on grid ``grids[i] = (h_i, w_i)``; out_size is (H, W)."""
        if len(features) != len(self.proj):
            raise ValueError(f"expected {len(self.proj)} tap features, got {len(features)}")
        target = max(grids, key=lambda g: g[0] * g[1])
        fused = 0
        for feat, grid, norm, proj in zip(features, grids, self.norms, self.proj):
            x = proj(norm(feat)).transpose(1, 2).reshape(feat.shape[0], -1, *grid)
            if tuple(grid) != tuple(target):
                x = F.interpolate(x, size=target, mode="bilinear", align_corners=False)
            fused = fused + x
        x = self._act(self.gn1(self.mix1(fused)))
        x = self._act(self.gn2(self.mix2(x)))
        x = self.head(x)
        return F.interpolate(x, size=tuple(out_size), mode="bilinear", align_corners=False)
