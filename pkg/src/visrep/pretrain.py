"""Pre-training driver: optimizer, warmup+cosine schedule, epoch loop, EMA.

One logical training stream. Each step runs sample -> augment -> loss ->
gradient step -> EMA update, in that order; the augmentation happens inside
the objective's `compute` (it consumes the same numpy Generator as the
sampler, which is what makes runs bitwise reproducible from a single seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data.corpus import CorpusIndex, sample_batch
from .data.manifest import DatasetManifest
from .model.stack import save_checkpoint, tau_at
from .objectives.base import ObjectiveConfig


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; `last_good` points at the newest usable checkpoint."""

    def __init__(self, message, last_good=None):
        super().__init__(message)
        self.last_good = last_good


@dataclass(frozen=True)
class OptimizerSpec:
    """Decoupled-weight-decay Adam plus the epoch budget it runs for."""

    base_lr: float
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 1e-5
    batch_size: int = 512
    epochs: int = 100
    early_stop: int | None = None  # hard epoch cap, if below `epochs`

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if not all(0 < b < 1 for b in self.betas):
            raise ValueError(f"betas must lie in (0, 1), got {self.betas}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    @classmethod
    def from_objective(cls, config: ObjectiveConfig) -> "OptimizerSpec":
        return cls(base_lr=config.base_lr, betas=config.betas,
                   weight_decay=config.weight_decay, batch_size=config.batch_size,
                   epochs=config.epochs, early_stop=config.early_stop)


@dataclass(frozen=True)
class ScheduleSpec:
    warmup_ratio: float = 0.1
    initial_lr_ratio: float = 0.1

    def __post_init__(self):
        for name in ("warmup_ratio", "initial_lr_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


def lr_at(step, total_steps, spec: OptimizerSpec,
          schedule: ScheduleSpec = ScheduleSpec()) -> float:
    """Linear ramp from `initial_lr_ratio`*base to base over the warmup span,
    then cosine decay from base to zero at `total_steps`."""
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    base = spec.base_lr
    warmup = int(round(schedule.warmup_ratio * total_steps))
    if step < warmup:
        frac = step / warmup
        return base * (schedule.initial_lr_ratio + (1 - schedule.initial_lr_ratio) * frac)
    span = max(1, total_steps - warmup)
    progress = (step - warmup) / span
    return base * 0.5 * (1.0 + math.cos(math.pi * progress))


def early_stop(history, cap) -> bool:
    """Hard epoch cap: stop once `cap` epochs have finished (None = never)."""
    return cap is not None and len(history) >= cap


def make_optimizer(params, spec: OptimizerSpec) -> torch.optim.AdamW:
    return torch.optim.AdamW(params, lr=spec.base_lr, betas=spec.betas,
                             weight_decay=spec.weight_decay)


@dataclass
class PretrainResult:
    checkpoint: Path          # final parameters (== init when epochs is 0)
    metrics: Path             # JSONL, one row per optimization step
    history: list = field(default_factory=list)  # per-epoch mean losses
    steps: int = 0
    planned_epochs: int = 0   # schedule horizon (after any regime forcing)
    ran_epochs: int = 0
    stopped_early: bool = False


def _epoch_checkpoint(out_dir: Path, epoch: int) -> Path:
    return out_dir / f"epoch-{epoch:03d}.pt"


def pretrain(objective, data, spec: OptimizerSpec, seed: int, out_dir,
             schedule: ScheduleSpec = ScheduleSpec()) -> PretrainResult:
    """Run the pre-training loop and return paths to its artifacts.

    `data` is a CorpusIndex or a DatasetManifest (indexed on the fly).  The
    schedule horizon is the full planned epoch count even when an early-stop
    cap ends the run sooner, so capped runs see the same lr curve as full
    ones.  Regimes that pin an epoch count (the 100M-transition one) override
    `spec.epochs`.
    """
    corpus = CorpusIndex(data) if isinstance(data, DatasetManifest) else data
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    forced = corpus.manifest.pretrain_epochs
    planned = forced if forced is not None else spec.epochs
    cap = spec.early_stop

    steps_per_epoch = corpus.n_transitions // spec.batch_size
    if planned > 0 and steps_per_epoch == 0:
        raise ValueError(f"batch_size {spec.batch_size} exceeds corpus size "
                         f"{corpus.n_transitions}")
    total_steps = planned * steps_per_epoch

    torch.manual_seed(seed)
    rng = np.random.default_rng(seed)
    optimizer = make_optimizer(objective.trainable_parameters(), spec)
    kind, kwargs = objective.kind, objective.sample_kwargs()

    final_path = out_dir / "final.pt"
    metrics_path = out_dir / "metrics.jsonl"

    def checkpoint(path, step, epoch):
        meta = {"step": step, "epoch": epoch, "seed": seed,
                "objective": objective.config.name,
                "optimizer": asdict(spec), "planned_epochs": planned}
        save_checkpoint(path, objective.stack.config,
                        {"stack": objective.stack, "objective": objective}, meta)

    result = PretrainResult(checkpoint=final_path, metrics=metrics_path,
                            planned_epochs=planned)
    if planned == 0:
        checkpoint(final_path, step=0, epoch=0)
        metrics_path.write_text("")
        return result

    last_good = None
    step = 0
    with metrics_path.open("w") as log:
        for epoch in range(1, planned + 1):
            losses = []
            for _ in range(steps_per_epoch):
                batch = sample_batch(corpus, kind, spec.batch_size, rng, **kwargs)
                lr = lr_at(step, total_steps, spec, schedule)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                try:
                    out = objective.compute(batch, rng)
                except FloatingPointError as err:
                    raise TrainingDiverged(str(err), last_good=last_good) from err
                if not torch.isfinite(out.loss):
                    raise TrainingDiverged(f"non-finite loss at step {step}",
                                           last_good=last_good)
                optimizer.zero_grad(set_to_none=True)
                out.loss.backward()
                optimizer.step()
                tau = None
                if objective.uses_mirror:
                    tau = tau_at(step, total_steps)
                    objective.update_mirror(tau)
                step += 1
                losses.append(out.loss.item())
                row = {"step": step, "epoch": epoch, "loss": losses[-1], "lr": lr,
                       "tau": tau}
                row.update(out.diagnostics)
                log.write(json.dumps(row, sort_keys=True) + "\n")
            result.history.append({"epoch": epoch, "mean_loss": float(np.mean(losses))})
            last_good = _epoch_checkpoint(out_dir, epoch)
            checkpoint(last_good, step=step, epoch=epoch)
            if early_stop(result.history, cap):
                result.stopped_early = True
                break

    result.steps = step
    result.ran_epochs = len(result.history)
    checkpoint(final_path, step=step, epoch=result.ran_epochs)
    return result
