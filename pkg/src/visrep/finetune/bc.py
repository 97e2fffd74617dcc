"""Offline behavior-cloning fine-tuning over a frozen backbone."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..augment import AugmentSpec, augment_stack
from ..model.stack import (EncoderStack, StackConfig, freeze_backbone,
                           load_checkpoint, load_modules, retarget)
from ..pretrain import OptimizerSpec, ScheduleSpec, lr_at, make_optimizer
from .envs import evaluate_policy


@dataclass(frozen=True)
class OfflineBCSpec:
    expected_count: int = 50_000   # transitions per game; mismatch warns
    epochs: int = 100
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 512
    betas: tuple[float, float] = (0.9, 0.999)
    augment: AugmentSpec = AugmentSpec()

    def optimizer(self) -> OptimizerSpec:
        return OptimizerSpec(base_lr=self.base_lr, betas=self.betas,
                             weight_decay=self.weight_decay,
                             batch_size=self.batch_size, epochs=self.epochs)


@dataclass
class ExpertData:
    """Observation/action pairs from demonstrations of a single game."""

    obs: np.ndarray          # (N, 4, 84, 84) uint8 (or a list of such arrays)
    actions: np.ndarray      # (N,) ints in [0, action_count)
    action_count: int = 18

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.int64)
        if len(self.obs) != len(self.actions):
            raise ValueError("obs/action count mismatch")
        if len(self.actions) and not (0 <= self.actions.min()
                                      and self.actions.max() < self.action_count):
            raise ValueError("action id outside the declared action space")

    def __len__(self):
        return len(self.actions)


@dataclass
class BCFinetuneResult:
    stack: EncoderStack
    game: str
    action_count: int
    history: list = field(default_factory=list)
    metrics: Path | None = None

    def policy(self, obs):
        """Greedy action for a single (4, 84, 84) observation."""
        with torch.no_grad():
            x = torch.from_numpy(np.asarray(obs, np.float32) / 255.0)[None]
            logits = self.stack(x, [self.game])[0, :self.action_count]
        return int(logits.argmax())

    def evaluate(self, env, episodes=100):
        return evaluate_policy(env, self.policy, episodes)


def load_pretrained_stack(checkpoint) -> EncoderStack:
    """Materialize the encoder stack saved by the pre-training driver."""
    if isinstance(checkpoint, EncoderStack):
        return checkpoint
    payload = load_checkpoint(checkpoint)
    stack = EncoderStack(StackConfig.from_dict(payload["config"]))
    load_modules(payload, {"stack": stack}, only=("stack",))
    return stack


def finetune_offline_bc(checkpoint, game: str, dataset: ExpertData,
                        spec: OfflineBCSpec = OfflineBCSpec(), seed: int = 0,
                        out_dir=None) -> BCFinetuneResult:
    """Cross-entropy training of a re-initialized neck/head on expert pairs.

    The backbone is frozen before the first step; `game` names the downstream
    head (it need not appear in the pre-training game set).
    """
    if len(dataset) != spec.expected_count:
        warnings.warn(f"expected {spec.expected_count} expert transitions, "
                      f"got {len(dataset)}; proceeding", stacklevel=2)
    stack = load_pretrained_stack(checkpoint)
    freeze_backbone(stack)
    retarget(stack, (game,), seed)
    result = BCFinetuneResult(stack=stack, game=game,
                              action_count=dataset.action_count)

    opt_spec = spec.optimizer()
    steps_per_epoch = len(dataset) // spec.batch_size
    if spec.epochs > 0 and steps_per_epoch == 0:
        raise ValueError(f"batch_size {spec.batch_size} exceeds dataset size "
                         f"{len(dataset)}")
    total_steps = spec.epochs * steps_per_epoch

    log = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        result.metrics = out_dir / "bc-metrics.jsonl"
        log = result.metrics.open("w")

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    optimizer = make_optimizer([p for p in stack.parameters() if p.requires_grad],
                               opt_spec)
    games = [game] * spec.batch_size
    step = 0
    try:
        for epoch in range(1, spec.epochs + 1):
            order = rng.permutation(len(dataset))
            losses, hits = [], 0
            for b in range(steps_per_epoch):
                idx = order[b * spec.batch_size:(b + 1) * spec.batch_size]
                obs = np.stack([dataset.obs[i] for i in idx])
                labels = torch.from_numpy(dataset.actions[idx])
                views = torch.from_numpy(augment_stack(obs, spec.augment, rng))
                lr = lr_at(step, total_steps, opt_spec)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                logits = stack(views, games)
                loss = F.cross_entropy(logits, labels)
                optimizer.zero_grad(set_to_none=True)
                loss.backward()
                optimizer.step()
                step += 1
                losses.append(loss.item())
                hits += (logits.argmax(dim=1) == labels).sum().item()
                if log is not None:
                    row = {"step": step, "epoch": epoch, "loss": losses[-1], "lr": lr}
                    log.write(json.dumps(row, sort_keys=True) + "\n")
            result.history.append({
                "epoch": epoch,
                "mean_loss": float(np.mean(losses)),
                "accuracy": hits / (steps_per_epoch * spec.batch_size),
            })
    finally:
        if log is not None:
            log.close()
    return result
