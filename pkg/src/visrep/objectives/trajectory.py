"""Reward-aware objectives: conservative Q-learning and sequence modeling."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..games import ACTION_SPACE
from ..model import HeadBank
from ..projection import atom_support, categorical_projection
from .base import LossOutput, Objective


class _QBase(Objective):
    """Shared pieces: augmented transition views, mirrored full Q-function."""

    kind = "trajectory"

    def sample_kwargs(self):
        return {"K": 1}

    def transition(self, batch, rng):
        obs = self.view(batch.obs[:, 0], rng)
        nxt = self.view(batch.obs[:, 1], rng)
        actions = torch.from_numpy(batch.actions[:, 0])
        if actions.min() < 0 or actions.max() >= ACTION_SPACE:
            raise ValueError("action id outside the full console action set")
        rewards = torch.from_numpy(np.clip(batch.rewards[:, 0], -1.0, 1.0)).to(obs.dtype)
        if batch.terminals is None:
            raise ValueError("trajectory batch lacks terminal flags")
        done = torch.from_numpy(batch.terminals[:, 1].astype(np.float64)).to(obs.dtype)
        return obs, nxt, actions, rewards, done


class ConservativeQ(_QBase):
    """Squared-error TD with a conservatism penalty.

    loss = (Q(o_t, a_t) - [r + gamma * (1 - done) * max_a Q'(o_{t+1}, a)])^2
           + coef * (logsumexp_a Q(o_t, a) - Q(o_t, a_t))
    where Q' is the momentum copy of the whole Q-function.
    """

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        self.q_head = HeadBank(stack.config.games, stack.config.latent, ACTION_SPACE)
        self.m_backbone = self.add_mirror("m_backbone", stack.backbone)
        self.m_neck = self.add_mirror("m_neck", stack.neck)
        self.m_q_head = self.add_mirror("m_q_head", self.q_head)

    def q_values(self, obs, games):
        return self.q_head(self.stack.encode(obs, games), games)

    @torch.no_grad()
    def target_q_values(self, obs, games):
        return self.m_q_head(self.m_neck(self.m_backbone(obs), games), games)

    def compute(self, batch, rng) -> LossOutput:
        games = batch.games
        obs, nxt, actions, rewards, done = self.transition(batch, rng)
        q = self.q_values(obs, games)
        if not torch.isfinite(q).all():
            raise FloatingPointError("non-finite Q values")
        q_a = q.gather(1, actions.unsqueeze(1)).squeeze(1)
        with torch.no_grad():
            target = rewards + self.config.gamma * (1.0 - done) * \
                self.target_q_values(nxt, games).max(dim=1).values
        td = F.mse_loss(q_a, target)
        conservatism = (torch.logsumexp(q, dim=1) - q_a).mean()
        loss = td + self.config.cql_coef * conservatism
        return self.finalize(loss, {"td_error": td.detach().item(),
                                    "conservatism": conservatism.detach().item(),
                                    "mean_q": q_a.detach().mean().item()})


class ConservativeQDistributional(_QBase):
    """Categorical TD: cross-entropy to the projected target distribution of
    the mirror's best (by expected value) next action, plus the same
    conservatism penalty applied to expected Q values."""

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        if config.n_atoms < 2:
            raise ValueError("need at least two atoms")
        self.q_head = HeadBank(stack.config.games, stack.config.latent,
                               ACTION_SPACE * config.n_atoms)
        self.m_backbone = self.add_mirror("m_backbone", stack.backbone)
        self.m_neck = self.add_mirror("m_neck", stack.neck)
        self.m_q_head = self.add_mirror("m_q_head", self.q_head)
        self.register_buffer("support", atom_support(config.v_min, config.v_max,
                                                     config.n_atoms))

    def _logits(self, head, latent, games):
        out = head(latent, games)
        return out.reshape(out.shape[0], ACTION_SPACE, self.config.n_atoms)

    def compute(self, batch, rng) -> LossOutput:
        games = batch.games
        obs, nxt, actions, rewards, done = self.transition(batch, rng)
        z = self.support.to(obs.dtype)
        log_p = F.log_softmax(
            self._logits(self.q_head, self.stack.encode(obs, games), games), dim=2)
        if not torch.isfinite(log_p).all():
            raise FloatingPointError("non-finite Q distribution")
        with torch.no_grad():
            latent = self.m_neck(self.m_backbone(nxt), games)
            p_next = F.softmax(self._logits(self.m_q_head, latent, games), dim=2)
            exp_next = (p_next * z).sum(dim=2)              # (B, A)
            best = exp_next.argmax(dim=1)                   # argmax of expected value
            dist = p_next[torch.arange(len(games)), best]   # (B, N)
            target = categorical_projection(
                dist, rewards, self.config.gamma * (1.0 - done), z)
        log_p_a = log_p[torch.arange(len(games)), actions]  # (B, N)
        ce = -(target * log_p_a).sum(dim=1).mean()
        exp_q = (log_p.exp() * z).sum(dim=2)                # (B, A)
        q_a = exp_q.gather(1, actions.unsqueeze(1)).squeeze(1)
        conservatism = (torch.logsumexp(exp_q, dim=1) - q_a).mean()
        loss = ce + self.config.cql_coef * conservatism
        return self.finalize(loss, {"cross_entropy": ce.detach().item(),
                                    "conservatism": conservatism.detach().item(),
                                    "mean_q": q_a.detach().mean().item()})


class SequenceModel(Objective):
    """Causal transformer over (return-to-go, observation, action) triplets;
    actions are predicted from each observation token's output."""

    kind = "trajectory"

    def __init__(self, stack, config, augment=None):
        super().__init__(stack, config, augment)
        d = stack.config.latent
        games = stack.config.games
        steps = config.seq_steps
        self.seq_len = 3 * steps
        self.rtg_embed = nn.Linear(1, d)
        self.action_embed = nn.ModuleDict(
            {g: nn.Embedding(ACTION_SPACE, d) for g in games})
        self.pos_embed = nn.Parameter(torch.empty(self.seq_len, d).normal_(std=0.02))
        layer = nn.TransformerEncoderLayer(
            d, config.n_heads, dim_feedforward=config.mlp_ratio * d,
            dropout=0.0, activation="gelu", batch_first=True, norm_first=True)
        self.blocks = nn.TransformerEncoder(layer, config.dec_layers,
                                            norm=nn.LayerNorm(d),
                                            enable_nested_tensor=False)
        self.head = HeadBank(games, d, ACTION_SPACE)

    def sample_kwargs(self):
        return {"K": self.config.seq_steps - 1, "with_returns": True, "gamma": 1.0}

    def _embed_actions(self, actions, games):
        d = self.pos_embed.shape[-1]
        out = torch.empty(*actions.shape, d, dtype=self.pos_embed.dtype)
        for g in sorted(set(games)):
            rows = [i for i, gi in enumerate(games) if gi == g]
            idx = torch.as_tensor(rows)
            out[idx] = self.action_embed[g](actions[idx])
        return out

    def action_logits(self, obs, actions, returns, games,
                      lengths=None) -> torch.Tensor:
        """(B, S) logits per step; short sequences sit right-aligned with the
        first S - length steps as padding."""
        b, steps = actions.shape
        if steps != self.config.seq_steps:
            raise ValueError(f"expected {self.config.seq_steps} steps, got {steps}")
        scaled = returns * self.config.reward_scale
        rtg_tok = self.rtg_embed(scaled.unsqueeze(-1).to(self.pos_embed.dtype))
        obs_flat = obs.reshape(b * steps, *obs.shape[2:])
        games_flat = [g for g in games for _ in range(steps)]
        obs_tok = self.stack.encode(obs_flat, games_flat).reshape(b, steps, -1)
        act_tok = self._embed_actions(actions, games)
        tokens = torch.empty(b, self.seq_len, obs_tok.shape[-1],
                             dtype=obs_tok.dtype)
        tokens[:, 0::3] = rtg_tok
        tokens[:, 1::3] = obs_tok
        tokens[:, 2::3] = act_tok
        tokens = tokens + self.pos_embed
        mask = self._attention_mask(lengths, b, tokens.dtype)
        out = self.blocks(tokens, mask=mask)
        return self.head(out[:, 1::3], games)  # read off the observation tokens

    def _attention_mask(self, lengths, batch, dtype):
        causal = torch.triu(torch.ones(self.seq_len, self.seq_len, dtype=torch.bool),
                            diagonal=1)
        if lengths is None:
            return causal
        mask = causal.unsqueeze(0).repeat(batch, 1, 1)
        for i, ln in enumerate(lengths):
            pad = 3 * (self.config.seq_steps - int(ln))
            mask[i, :, :pad] = True          # nobody attends to padding
            mask[i, :pad, :] = True
            mask[i, :pad, :pad] = ~torch.eye(pad, dtype=torch.bool)  # keep rows finite
        h = self.config.n_heads
        return mask.repeat_interleave(h, dim=0)

    def compute(self, batch, rng) -> LossOutput:
        games = batch.games
        steps = self.config.seq_steps
        obs = self.view(batch.obs[:, :steps], rng)
        actions = torch.from_numpy(batch.actions[:, :steps])
        if batch.returns_to_go is None:
            raise ValueError("sequence batch lacks returns-to-go")
        returns = torch.from_numpy(batch.returns_to_go[:, :steps]).to(obs.dtype)
        lengths = getattr(batch, "lengths", None)
        logits = self.action_logits(obs, actions, returns, games, lengths)
        if lengths is None:
            loss = F.cross_entropy(logits.reshape(-1, ACTION_SPACE),
                                   actions.reshape(-1))
        else:
            keep = torch.zeros(len(games), steps, dtype=torch.bool)
            for i, ln in enumerate(lengths):
                keep[i, steps - int(ln):] = True
            loss = F.cross_entropy(logits[keep], actions[keep])
        with torch.no_grad():
            acc = (logits.argmax(-1) == actions).float().mean().item()
        return self.finalize(loss, {"action_accuracy": acc,
                                    "sequence_tokens": self.seq_len})
