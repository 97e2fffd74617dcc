"""Contrastive objectives: two-view augmentation, temporal, and hard-negative."""

from __future__ import annotations

import torch

from ..model import HeadBank
from .base import LossOutput, Objective
from .infonce import info_nce


class _ContrastiveBase(Objective):
    """Online encoder + per-game linear predictor vs a momentum encoder."""

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        latent = stack.config.latent
        self.predictor = HeadBank(stack.config.games, latent, latent)
        self.m_backbone = self.add_mirror("m_backbone", stack.backbone)
        self.m_neck = self.add_mirror("m_neck", stack.neck)

    def online(self, view: torch.Tensor, games) -> torch.Tensor:
        q = self.stack.encode(view, games)
        return self.predictor(q, games)

    @torch.no_grad()
    def target(self, view: torch.Tensor, games) -> torch.Tensor:
        return self.m_neck(self.m_backbone(view), games)


class Curl(_ContrastiveBase):
    """Two augmentations of the same frame stack should encode alike."""

    kind = "image"

    def compute(self, batch, rng) -> LossOutput:
        v1 = self.view(batch.obs, rng)
        v2 = self.view(batch.obs, rng)
        y = self.online(v1, batch.games)
        q_pos = self.target(v2, batch.games)
        loss, diag = info_nce(y, q_pos, reduction=self.config.nce_reduction)
        return self.finalize(loss, diag)


class Atc(_ContrastiveBase):
    """Predict the momentum encoding of the near-future frame stack."""

    kind = "video"

    def sample_kwargs(self):
        return {"k": self.config.k}

    def compute(self, batch, rng) -> LossOutput:
        anchor = self.view(batch.obs, rng)
        future = self.view(batch.future, rng)
        y = self.online(anchor, batch.games)
        q_pos = self.target(future, batch.games)
        loss, diag = info_nce(y, q_pos, reduction=self.config.nce_reduction)
        return self.finalize(loss, diag)


class R3m(_ContrastiveBase):
    """Temporal contrast with the farther future as an extra hard negative."""

    kind = "video"

    def __init__(self, stack, config, augment=None):
        if config.k2 is None or config.k is None or config.k2 <= config.k:
            raise ValueError("hard-negative offset k2 must exceed the positive offset k")
        super().__init__(stack, config, augment)

    def sample_kwargs(self):
        return {"k": self.config.k, "k2": self.config.k2}

    def compute(self, batch, rng) -> LossOutput:
        if batch.further is None:
            raise ValueError("batch lacks the farther-future view")
        anchor = self.view(batch.obs, rng)
        future = self.view(batch.future, rng)
        further = self.view(batch.further, rng)
        y = self.online(anchor, batch.games)
        q_pos = self.target(future, batch.games)
        q_neg = self.target(further, batch.games)
        loss, diag = info_nce(y, q_pos, hard_negatives=q_neg,
                              reduction=self.config.nce_reduction)
        return self.finalize(loss, diag)
