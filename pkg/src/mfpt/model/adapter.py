import torch.nn as nn


class LowRankAdapter(nn.Module):
    """Residual low-rank refinement ``x + U V x`` applied after a frozen block.

    ``U`` starts at zero so a fresh adapter is the identity. Any module with
    the same (B, L, C) -> (B, L, C) signature can replace it.
    """

    def __init__(self, dim, rank):
        super().__init__()
        if rank < 1:
            raise ValueError("adapter rank must be positive")
        self.down = nn.Linear(dim, rank, bias=False)   # V
        self.up = nn.Linear(rank, dim, bias=False)     # U
        nn.init.zeros_(self.up.weight)

    def forward(self, x):
        return x + self.up(self.down(x))
