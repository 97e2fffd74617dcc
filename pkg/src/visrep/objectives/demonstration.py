"""Demonstration objectives: action cloning, inverse dynamics, latent rollout."""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from ..games import ACTION_SPACE
from ..model import HeadBank
from .base import LossOutput, Objective
from .infonce import grid_info_nce


def _check_actions(actions: torch.Tensor):
    if actions.min() < 0 or actions.max() >= ACTION_SPACE:
        raise ValueError("action id outside the full console action set")


class BehaviorCloning(Objective):
    """Cross-entropy between the stack's action logits and the logged action."""

    kind = "demo"

    def sample_kwargs(self):
        return {"K": 0}

    def compute(self, batch, rng) -> LossOutput:
        obs = self.view(batch.obs[:, 0], rng)
        actions = torch.from_numpy(batch.actions[:, 0])
        _check_actions(actions)
        logits = self.stack(obs, batch.games)
        loss = F.cross_entropy(logits, actions)
        with torch.no_grad():
            acc = (logits.argmax(1) == actions).float().mean().item()
        return self.finalize(loss, {"action_accuracy": acc})


class InverseDynamics(Objective):
    """Predict a_t from the pair (o_t, o_{t+1}) encoded by the shared trunk."""

    kind = "demo"

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        latent = stack.config.latent
        self.pair_head = HeadBank(stack.config.games, 2 * latent, ACTION_SPACE)

    def sample_kwargs(self):
        return {"K": 1}

    def compute(self, batch, rng) -> LossOutput:
        games = batch.games
        obs = self.view(batch.obs[:, 0], rng)
        nxt = self.view(batch.obs[:, 1], rng)
        actions = torch.from_numpy(batch.actions[:, 0])
        _check_actions(actions)
        q = torch.cat([self.stack.encode(obs, games),
                       self.stack.encode(nxt, games)], dim=1)
        logits = self.pair_head(q, games)
        loss = F.cross_entropy(logits, actions)
        with torch.no_grad():
            acc = (logits.argmax(1) == actions).float().mean().item()
        return self.finalize(loss, {"action_accuracy": acc})


class SelfPrediction(Objective):
    """Roll the first latent forward through actions; contrast against the
    momentum encodings of the actually observed future frames."""

    kind = "demo"

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        latent = stack.config.latent
        games = stack.config.games
        self.action_embed = nn.ModuleDict(
            {g: nn.Embedding(ACTION_SPACE, latent) for g in games})
        self.cell = nn.GRUCell(latent, latent)
        self.proj = HeadBank(games, latent, latent)
        self.m_backbone = self.add_mirror("m_backbone", stack.backbone)
        self.m_neck = self.add_mirror("m_neck", stack.neck)

    def sample_kwargs(self):
        return {"K": self.config.seq_steps}

    def _embed_actions(self, actions: torch.Tensor, games) -> torch.Tensor:
        out = torch.empty(len(games), actions.shape[1],
                          self.cell.hidden_size, dtype=self.cell.weight_hh.dtype)
        for g in sorted(set(games)):
            rows = [i for i, gi in enumerate(games) if gi == g]
            idx = torch.as_tensor(rows)
            out[idx] = self.action_embed[g](actions[idx])
        return out

    def rollout(self, batch, rng) -> tuple[torch.Tensor, torch.Tensor]:
        """Predicted latents y_{t+1..t+K} and momentum targets q_{t+1..t+K}."""
        steps = self.config.seq_steps
        games = batch.games
        obs = self.view(batch.obs, rng)  # (B, K+1, 4, 84, 84)
        actions = torch.from_numpy(batch.actions[:, :steps])
        _check_actions(actions)
        act_emb = self._embed_actions(actions, games)
        h = self.stack.encode(obs[:, 0], games)
        preds = []
        for k in range(steps):
            h = self.cell(act_emb[:, k], h)
            preds.append(self.proj(h, games))
        y = torch.stack(preds, dim=1)  # (B, K, D)
        with torch.no_grad():
            b = obs.shape[0]
            flat = obs[:, 1:].reshape(b * steps, *obs.shape[2:])
            flat_games = [g for g in games for _ in range(steps)]
            q = self.m_neck(self.m_backbone(flat), flat_games)
            q = q.reshape(b, steps, -1)
        return y, q

    def compute(self, batch, rng) -> LossOutput:
        y, q = self.rollout(batch, rng)
        loss, diag = grid_info_nce(y, q, reduction=self.config.nce_reduction)
        return self.finalize(loss, diag)


class SelfPredictionWithInverse(Objective):
    """Plain sum of the rollout-contrast and inverse-dynamics losses over one
    shared encoder and one demo batch."""

    kind = "demo"

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        self.spr = SelfPrediction(stack, config.replace(name="spr"), augment)
        self.idm = InverseDynamics(stack, config.replace(name="idm"), augment)
        # the composite advances its children's mirrors
        self._mirror_pairs = list(self.spr._mirror_pairs)

    def sample_kwargs(self):
        return {"K": self.config.seq_steps}

    def compute(self, batch, rng) -> LossOutput:
        spr_out = self.spr.compute(batch, rng)
        idm_out = self.idm.compute(batch, rng)
        loss = spr_out.loss + idm_out.loss
        diag = {"rollout_loss": spr_out.loss.detach().item(),
                "inverse_loss": idm_out.loss.detach().item()}
        diag.update({f"rollout_{k}": v for k, v in spr_out.diagnostics.items()})
        diag.update({f"inverse_{k}": v for k, v in idm_out.diagnostics.items()})
        return self.finalize(loss, diag)
