"""Game-conditioned neck: spatial embedding, pooling, normalization, MLP.

The only game-specific parameters in the trunk are the per-game spatial
embeddings (initialized to ones, so an untrained neck reduces to plain mean
pooling).  The pooled vector is instance-normalized across channels and passed
through a shared two-layer MLP into the latent space.

Masked-reconstruction objectives skip the pooling: `tokens` applies the same
spatial embedding and MLP per feature-map position, preserving the token grid.
"""

from __future__ import annotations

import torch
from torch import nn


def instance_norm(x: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    """Normalize each row of (B, C) to zero mean / unit variance (biased)."""
    mean = x.mean(dim=1, keepdim=True)
    var = x.var(dim=1, unbiased=False, keepdim=True)
    return (x - mean) / torch.sqrt(var + eps)


class GameNeck(nn.Module):
    def __init__(self, games, d_in: int, grid: tuple[int, int],
                 hidden: int = 1024, latent: int = 512):
        super().__init__()
        self.games = tuple(games)
        self.grid = tuple(grid)
        self.d_in = d_in
        self.latent = latent
        self.spatial = nn.ParameterDict(
            {g: nn.Parameter(torch.ones(*self.grid)) for g in self.games})
        self.mlp = nn.Sequential(
            nn.Linear(d_in, hidden), nn.ReLU(inplace=True), nn.Linear(hidden, latent))

    def _embed(self, z: torch.Tensor, games) -> torch.Tensor:
        """Multiply each sample's feature map by its game's spatial embedding."""
        b, c, h, w = z.shape
        if (h, w) != self.grid:
            raise ValueError(f"feature grid {(h, w)} != neck grid {self.grid}")
        emb = torch.stack([self.spatial[g] for g in games])  # (B, H, W)
        return z * emb.unsqueeze(1)

    def forward(self, z: torch.Tensor, games) -> torch.Tensor:
        """(B, C, H, W) -> (B, latent) pooled latent."""
        zg = self._embed(z, games)
        pooled = zg.mean(dim=(2, 3))
        return self.mlp(instance_norm(pooled))

    def raw_tokens(self, z: torch.Tensor, games) -> torch.Tensor:
        """(B, C, H, W) -> (B, H*W, C): spatially embedded, pre-MLP, row-major.

        Token masking happens on these (the embedding is applied first, the
        MLP afterwards on the surviving tokens).
        """
        zg = self._embed(z, games)
        return zg.flatten(2).transpose(1, 2)

    def tokens(self, z: torch.Tensor, games) -> torch.Tensor:
        """(B, C, H, W) -> (B, H*W, latent) per-position latents, row-major."""
        return self.mlp(self.raw_tokens(z, games))
