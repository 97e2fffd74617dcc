"""Per-game linear output heads.

Each game owns an independent `nn.Linear`; a forward pass only touches the
heads of the games present in the batch, so the optimizer never sees gradients
(and decoupled weight decay never shrinks weights) for games that did not
contribute to the loss.
"""

from __future__ import annotations

import torch
from torch import nn


class HeadBank(nn.Module):
    def __init__(self, games, d_in: int, d_out: int):
        super().__init__()
        self.games = tuple(games)
        self.d_in = d_in
        self.d_out = d_out
        self.heads = nn.ModuleDict({g: nn.Linear(d_in, d_out) for g in self.games})

    def forward(self, x: torch.Tensor, games) -> torch.Tensor:
        """Apply each sample's own head.  x: (B, ..., d_in) -> (B, ..., d_out)."""
        if len(games) != x.shape[0]:
            raise ValueError("one game label per batch row required")
        out = x.new_empty(*x.shape[:-1], self.d_out)
        for g in sorted(set(games)):
            rows = [i for i, gi in enumerate(games) if gi == g]
            idx = torch.as_tensor(rows, device=x.device)
            out[idx] = self.heads[g](x[idx])
        return out
