"""Masked feature reconstruction, single-frame and cross-frame.

Masking operates on the backbone's feature-map tokens (after the game-wise
spatial embedding, before the neck MLP).  Predictions are per-game linear maps
from decoder outputs to the pixel patch each token covers; the squared error
is averaged over masked positions only.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..model import HeadBank
from .base import LossOutput, Objective


def masked_token_count(n_tokens: int, ratio: float) -> int:
    if not 0.0 < ratio < 1.0:
        raise ValueError("mask ratio must lie strictly between 0 and 1")
    return int(round(ratio * n_tokens))


def sample_token_mask(n_tokens: int, ratio: float, batch: int,
                      rng: np.random.Generator) -> tuple[torch.Tensor, torch.Tensor]:
    """Independent uniform masks per sample: (visible_idx, masked_idx)."""
    n_masked = masked_token_count(n_tokens, ratio)
    vis = np.empty((batch, n_tokens - n_masked), dtype=np.int64)
    hid = np.empty((batch, n_masked), dtype=np.int64)
    for b in range(batch):
        perm = rng.permutation(n_tokens)
        hid[b] = np.sort(perm[:n_masked])
        vis[b] = np.sort(perm[n_masked:])
    return torch.from_numpy(vis), torch.from_numpy(hid)


def pixel_patches(view: torch.Tensor, grid: int, cell: int) -> torch.Tensor:
    """(B, C, grid*cell, grid*cell) -> (B, grid*grid, C*cell*cell), row-major.

    Patch g*i+j covers pixel rows [cell*i, cell*(i+1)) and the matching
    columns in every channel, aligning patches with feature-map tokens.
    """
    b, c, h, w = view.shape
    if h != grid * cell or w != grid * cell:
        raise ValueError("view does not tile into the requested patch grid")
    p = view.reshape(b, c, grid, cell, grid, cell)
    return p.permute(0, 2, 4, 1, 3, 5).reshape(b, grid * grid, c * cell * cell)


def _gather_tokens(tokens: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    """tokens (B, N, D), idx (B, M) -> (B, M, D)."""
    return torch.gather(tokens, 1, idx.unsqueeze(-1).expand(-1, -1, tokens.shape[-1]))


class _MaskedBase(Objective):
    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        d_z, h_z, w_z = stack.backbone.out_shape
        self.grid = h_z
        if h_z != w_z or 84 % h_z != 0:
            raise ValueError("feature map must be square and divide the 84px frame")
        self.cell = 84 // h_z
        self.n_tokens = h_z * w_z
        d = stack.config.latent
        self.patch_dim = 4 * self.cell * self.cell
        self.enc_pos = nn.Parameter(torch.empty(self.n_tokens, d).normal_(std=0.02))
        self.dec_pos = nn.Parameter(torch.empty(self.n_tokens, d).normal_(std=0.02))
        self.mask_token = nn.Parameter(torch.empty(d).normal_(std=0.02))
        enc_layer = nn.TransformerEncoderLayer(
            d, config.n_heads, dim_feedforward=config.mlp_ratio * d,
            dropout=0.0, activation="gelu", batch_first=True, norm_first=True)
        self.encoder = nn.TransformerEncoder(enc_layer, config.enc_layers,
                                             norm=nn.LayerNorm(d),
                                             enable_nested_tensor=False)
        self.head = HeadBank(stack.config.games, d, self.patch_dim)

    def _encode_visible(self, view, games, vis_idx):
        """Backbone -> embedded tokens -> keep visible -> MLP+pos -> encoder."""
        raw = self.stack.neck.raw_tokens(self.stack.backbone(view), games)
        vis = _gather_tokens(raw, vis_idx)
        tok = self.stack.neck.mlp(vis) + self.enc_pos[vis_idx]
        return self.encoder(tok)

    def _full_sequence(self, encoded_visible, vis_idx, batch):
        """Mask tokens everywhere, encoder outputs scattered back in place."""
        d = encoded_visible.shape[-1]
        base = self.mask_token.expand(batch, self.n_tokens, d)
        idx = vis_idx.unsqueeze(-1).expand(-1, -1, d)
        return torch.scatter(base, 1, idx, encoded_visible) + self.dec_pos

    def _masked_mse(self, decoded, view, games, mask_idx):
        preds = self.head(_gather_tokens(decoded, mask_idx), games)
        targets = _gather_tokens(pixel_patches(view, self.grid, self.cell), mask_idx)
        return F.mse_loss(preds, targets)


class MaskedReconstruction(_MaskedBase):
    """Reconstruct heavily masked feature tokens of a single augmented view."""

    kind = "image"

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        d = stack.config.latent
        dec_layer = nn.TransformerEncoderLayer(
            d, config.n_heads, dim_feedforward=config.mlp_ratio * d,
            dropout=0.0, activation="gelu", batch_first=True, norm_first=True)
        self.decoder = nn.TransformerEncoder(dec_layer, config.dec_layers,
                                             norm=nn.LayerNorm(d),
                                             enable_nested_tensor=False)

    def compute(self, batch, rng) -> LossOutput:
        view = self.view(batch.obs, rng)
        b = view.shape[0]
        vis_idx, mask_idx = sample_token_mask(self.n_tokens, self.config.mask_ratio,
                                              b, rng)
        enc = self._encode_visible(view, batch.games, vis_idx)
        decoded = self.decoder(self._full_sequence(enc, vis_idx, b))
        loss = self._masked_mse(decoded, view, batch.games, mask_idx)
        return self.finalize(loss, {"masked_tokens": mask_idx.shape[1],
                                    "visible_tokens": vis_idx.shape[1]})


class CrossFrameReconstruction(_MaskedBase):
    """Reconstruct an almost fully masked future frame from the current one.

    Both frames share the backbone, spatial embedding, and encoder; the
    decoder recovers the future frame's masked tokens by cross-attending to
    the current frame's (unmasked) encoded tokens.
    """

    kind = "video"

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        d = stack.config.latent
        dec_layer = nn.TransformerDecoderLayer(
            d, config.n_heads, dim_feedforward=config.mlp_ratio * d,
            dropout=0.0, activation="gelu", batch_first=True, norm_first=True)
        self.decoder = nn.TransformerDecoder(dec_layer, config.dec_layers,
                                             norm=nn.LayerNorm(d))

    def sample_kwargs(self):
        return {"k": self.config.k}

    def compute(self, batch, rng) -> LossOutput:
        current = self.view(batch.obs, rng)
        future = self.view(batch.future, rng)
        b = current.shape[0]
        games = batch.games
        # current frame: all tokens visible
        all_idx = torch.arange(self.n_tokens).expand(b, -1)
        memory = self._encode_visible(current, games, all_idx)
        # future frame: nearly everything masked
        vis_idx, mask_idx = sample_token_mask(self.n_tokens, self.config.mask_ratio,
                                              b, rng)
        enc = self._encode_visible(future, games, vis_idx)
        decoded = self.decoder(self._full_sequence(enc, vis_idx, b), memory)
        loss = self._masked_mse(decoded, future, games, mask_idx)
        return self.finalize(loss, {"masked_tokens": mask_idx.shape[1],
                                    "visible_tokens": vis_idx.shape[1],
                                    "mean_k": float(np.mean(batch.ks))})
