"""Online RL fine-tuning: distributional dueling Q over a frozen backbone.

The loop is strictly sequential: one env step, then (after the warmup fill)
a fixed number of prioritized-replay updates, repeated.  No noisy layers;
exploration is epsilon-greedy on the expected Q values.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..augment import AugmentSpec, augment_stack, to_unit
from ..model.stack import EncoderStack, freeze_backbone, retarget
from ..projection import atom_support, categorical_projection
from .bc import load_pretrained_stack
from .envs import EnvironmentFault, evaluate_policy


@dataclass(frozen=True)
class RainbowSpec:
    steps: int = 50_000
    n_atoms: int = 51
    v_min: float = -10.0
    v_max: float = 10.0
    dueling: bool = True
    gamma: float = 0.99
    batch_size: int = 32
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1.5e-5
    max_grad_norm: float = 10.0
    priority_exponent: float = 0.5
    priority_floor: float = 1e-6
    beta_start: float = 0.4
    beta_end: float = 1.0
    eps_start: float = 1.0
    eps_end: float = 0.02
    eps_decay_steps: int = 50_000
    capacity: int = 50_000
    min_buffer: int = 2_000
    updates_per_step: int = 2
    n_step: int = 10
    q_hidden: int = 1024
    eval_episodes: int = 100
    target_update_every: int = 2_000  # hard copy cadence, in updates
    augment: AugmentSpec = AugmentSpec()
    log_every: int = 500


def epsilon_at(step, spec: RainbowSpec = RainbowSpec()) -> float:
    """Linear decay from eps_start to eps_end, constant afterwards."""
    frac = min(1.0, step / spec.eps_decay_steps)
    return spec.eps_start + (spec.eps_end - spec.eps_start) * frac


def beta_at(step, spec: RainbowSpec = RainbowSpec()) -> float:
    """Importance-correction exponent, annealed start -> end over the run."""
    frac = min(1.0, step / max(1, spec.steps))
    return spec.beta_start + (spec.beta_end - spec.beta_start) * frac


def nstep_return(window, n=10, gamma=0.99):
    """Multi-step return over consecutive transitions starting at one state.

    `window` holds (obs, action, reward, next_obs, terminal) tuples.  The sum
    truncates at the first terminal; bootstrapping is allowed only when no
    terminal occurs within the first `n` transitions.  Returns
    (G, bootstrap_obs, done_within).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not window:
        raise ValueError("empty transition window")
    g = 0.0
    for i, (_, _, reward, next_obs, terminal) in enumerate(window[:n]):
        g += (gamma ** i) * reward
        if terminal:
            return g, next_obs, True
    if len(window) < n:
        raise ValueError(f"window of {len(window)} transitions has no terminal "
                         f"and is shorter than n={n}")
    return g, window[n - 1][3], False


def priority_from_td(td_error, alpha=0.5, floor=1e-6):
    """Replay priority for one sample; `td_error` may be an array."""
    return (np.abs(td_error) + floor) ** alpha


def importance_weights(priorities, n_items, beta):
    """(N*P)^-beta for the given priorities, normalized by the largest weight."""
    p = np.asarray(priorities, dtype=np.float64)
    probs = p / p.sum()
    w = (n_items * probs) ** -beta
    return w / w.max()


def priority_weight(td_error, alpha, beta, priorities):
    """Spec'd pair: the new priority for `td_error` plus the importance
    weights of the supplied priority set."""
    n = len(priorities)
    return priority_from_td(td_error, alpha), importance_weights(priorities, n, beta)


class PrioritizedReplay:
    """FIFO ring buffer with proportional prioritized sampling."""

    def __init__(self, capacity, alpha=0.5, floor=1e-6):
        self.capacity = capacity
        self.alpha = alpha
        self.floor = floor
        self.entries = []
        self.priorities = np.zeros(capacity, dtype=np.float64)
        self._next = 0  # overwrite cursor once full

    def __len__(self):
        return len(self.entries)

    def add(self, entry):
        # new samples get the current max priority so they are seen at least once
        p = self.priorities[:len(self.entries)].max() if self.entries else 1.0
        if len(self.entries) < self.capacity:
            self.entries.append(entry)
            self.priorities[len(self.entries) - 1] = p
        else:
            self.entries[self._next] = entry
            self.priorities[self._next] = p
            self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size, rng, beta):
        n = len(self.entries)
        p = self.priorities[:n]
        probs = p / p.sum()
        idx = rng.choice(n, size=batch_size, p=probs)
        w = (n * probs[idx]) ** -beta
        return idx, [self.entries[i] for i in idx], w / w.max()

    def update(self, idx, td_errors):
        self.priorities[idx] = priority_from_td(td_errors, self.alpha, self.floor)


class DuelingQHead(nn.Module):
    """Value + advantage streams emitting a categorical distribution per action."""

    def __init__(self, latent, n_actions, n_atoms, hidden):
        super().__init__()
        self.n_actions = n_actions
        self.n_atoms = n_atoms
        self.value = nn.Sequential(nn.Linear(latent, hidden), nn.ReLU(),
                                   nn.Linear(hidden, n_atoms))
        self.advantage = nn.Sequential(nn.Linear(latent, hidden), nn.ReLU(),
                                       nn.Linear(hidden, n_actions * n_atoms))

    def log_probs(self, z):
        v = self.value(z).unsqueeze(1)                               # (B, 1, A)
        a = self.advantage(z).view(-1, self.n_actions, self.n_atoms)  # (B, n, A)
        logits = v + a - a.mean(dim=1, keepdim=True)
        return F.log_softmax(logits, dim=-1)


@dataclass
class RainbowResult:
    stack: EncoderStack
    q_head: DuelingQHead
    game: str
    support: torch.Tensor
    updates: int = 0
    env_steps: int = 0
    history: list = field(default_factory=list)
    metrics: Path | None = None
    final_score: float | None = None

    def policy(self, obs):
        """Greedy action from expected Q (no exploration, no augmentation)."""
        with torch.no_grad():
            x = torch.from_numpy(to_unit(obs))[None]
            z = self.stack.encode(x, [self.game])
            q = (self.q_head.log_probs(z).exp() * self.support).sum(dim=-1)
        return int(q[0].argmax())

    def evaluate(self, env, episodes=100):
        return evaluate_policy(env, self.policy, episodes)


def finetune_online_rl(checkpoint, env, spec: RainbowSpec = RainbowSpec(),
                       seed: int = 0, out_dir=None,
                       game: str = "online") -> RainbowResult:
    """Run the online fine-tuning loop against an EnvironmentAdapter.

    Exactly `updates_per_step * (steps - min_buffer)` gradient updates happen
    (updates start once `min_buffer` env steps have been taken).  The final
    score is the mean over `eval_episodes` greedy episodes.
    """
    if env.action_count > 18:
        raise ValueError(f"adapter exposes {env.action_count} actions; "
                         "expected at most 18")
    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)

    stack = load_pretrained_stack(checkpoint)
    freeze_backbone(stack)
    retarget(stack, (game,), seed)
    q_head = DuelingQHead(stack.config.latent, env.action_count,
                          spec.n_atoms, spec.q_hidden)
    target_neck = copy.deepcopy(stack.neck).requires_grad_(False)
    target_q = copy.deepcopy(q_head).requires_grad_(False)
    support = atom_support(spec.v_min, spec.v_max, spec.n_atoms,
                           dtype=torch.float32)

    result = RainbowResult(stack=stack, q_head=q_head, game=game, support=support)
    params = list(stack.neck.parameters()) + list(q_head.parameters())
    optimizer = torch.optim.Adam(params, lr=spec.lr, betas=spec.betas,
                                 eps=spec.adam_eps)
    replay = PrioritizedReplay(spec.capacity, spec.priority_exponent,
                               spec.priority_floor)

    def encode_online(views, grad):
        x = torch.from_numpy(views)
        ctx = torch.enable_grad() if grad else torch.no_grad()
        with ctx:
            z = stack.encode(x, [game] * len(x))
            return q_head.log_probs(z)

    def greedy(obs):
        log_p = encode_online(to_unit(obs)[None], grad=False)
        q = (log_p.exp() * support).sum(dim=-1)
        return int(q[0].argmax())

    def update(step):
        idx, batch, w = replay.sample(spec.batch_size, rng, beta_at(step, spec))
        views = augment_stack(np.stack([e[0] for e in batch]), spec.augment, rng)
        nxt = augment_stack(np.stack([e[3] for e in batch]), spec.augment, rng)
        actions = torch.tensor([e[1] for e in batch], dtype=torch.int64)
        rewards = torch.tensor([e[2] for e in batch], dtype=torch.float32)
        discounts = torch.tensor([e[4] for e in batch], dtype=torch.float32)

        with torch.no_grad():
            nxt_t = torch.from_numpy(nxt)
            online_q = (encode_online(nxt, grad=False).exp() * support).sum(-1)
            best = online_q.argmax(dim=1)                       # double-Q selection
            tz = target_q.log_probs(target_neck(stack.backbone(nxt_t),
                                                [game] * len(nxt_t))).exp()
            next_dist = tz[torch.arange(len(best)), best]
            target = categorical_projection(next_dist, rewards, discounts, support)

        log_p = encode_online(views, grad=True)
        log_p_a = log_p[torch.arange(len(actions)), actions]
        ce = -(target * log_p_a).sum(dim=1)
        loss = (torch.from_numpy(w).float() * ce).mean()
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        nn.utils.clip_grad_norm_(params, spec.max_grad_norm)
        optimizer.step()
        replay.update(idx, ce.detach().numpy())
        result.updates += 1
        if result.updates % spec.target_update_every == 0:
            target_neck.load_state_dict(stack.neck.state_dict())
            target_q.load_state_dict(q_head.state_dict())
        return loss.item()

    log = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.metrics = out_dir / "rl-metrics.jsonl"
        log = result.metrics.open("w")

    pending = []  # episode transitions awaiting their n-step window

    def flush(final):
        while pending and (final or len(pending) >= spec.n_step):
            g, boot, done = nstep_return(pending, spec.n_step, spec.gamma)
            m = min(len(pending), spec.n_step)
            disc = 0.0 if done else spec.gamma ** m
            replay.add((pending[0][0], pending[0][1], g, boot, disc))
            pending.pop(0)

    try:
        obs = env.reset() if spec.steps > 0 else None
        losses = []
        for step in range(1, spec.steps + 1):
            eps = epsilon_at(step, spec)
            if rng.random() < eps:
                action = int(rng.integers(env.action_count))
            else:
                action = greedy(obs)
            try:
                nxt_obs, reward, terminal, _ = env.step(action)
            except Exception as err:  # adapter faults carry the step index
                raise EnvironmentFault(f"env.step failed at step {step}: {err}",
                                       step=step) from err
            pending.append((obs, action, reward, nxt_obs, terminal))
            flush(final=terminal)
            obs = env.reset() if terminal else nxt_obs
            result.env_steps = step
            if step > spec.min_buffer:
                for _ in range(spec.updates_per_step):
                    losses.append(update(step))
            if step % spec.log_every == 0:
                row = {"step": step, "updates": result.updates,
                       "epsilon": eps, "beta": beta_at(step, spec),
                       "buffer": len(replay),
                       "mean_loss": float(np.mean(losses)) if losses else None}
                result.history.append(row)
                if log is not None:
                    log.write(json.dumps(row, sort_keys=True) + "\n")
                losses = []
        result.final_score = result.evaluate(env, spec.eval_episodes)
        if log is not None:
            log.write(json.dumps({"final_score": result.final_score},
                                 sort_keys=True) + "\n")
    finally:
        if log is not None:
            log.close()
    return result
