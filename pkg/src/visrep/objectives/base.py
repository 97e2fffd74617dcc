"""Shared plumbing for the pre-training losses.

Every objective is an `nn.Module` wrapping the encoder stack plus whatever
extra trainable pieces it owns (predictors, transformers, embeddings, value
heads).  `compute(batch, rng)` maps a raw sampled batch to a scalar loss and
a flat diagnostics dict.  Momentum ("mirror") branches are registered with
`requires_grad=False` and advanced externally via `update_mirror`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import torch
from torch import nn

from ..augment import AugmentSpec, augment_stack
from ..model import ema_update, make_mirror


@dataclass
class LossOutput:
    loss: torch.Tensor
    diagnostics: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Per-objective training hyperparameters and view-window settings."""
    name: str
    epochs: int
    base_lr: float
    weight_decay: float
    betas: tuple[float, float]
    batch_size: int
    early_stop: int | None = None
    # temporal window parameters
    k: int | tuple[int, int] | None = None      # steps to the future view
    k2: int | None = None                       # steps to the hard-negative view
    seq_steps: int | None = None                # K (prediction / context length)
    # masked reconstruction
    mask_ratio: float | None = None
    enc_layers: int = 3
    dec_layers: int = 4
    n_heads: int = 4
    mlp_ratio: int = 4
    # value learning
    cql_coef: float | None = None
    gamma: float | None = None
    v_min: float = -10.0
    v_max: float = 10.0
    n_atoms: int = 51
    # sequence modeling
    reward_scale: float | None = None
    # loss bookkeeping
    nce_reduction: str = "mean"

    def replace(self, **kw) -> "ObjectiveConfig":
        return replace(self, **kw)


DEFAULT_CONFIGS: dict[str, ObjectiveConfig] = {
    "curl": ObjectiveConfig("curl", epochs=100, early_stop=20, base_lr=3e-6,
                            weight_decay=1e-5, betas=(0.9, 0.999), batch_size=512),
    "mae": ObjectiveConfig("mae", epochs=100, base_lr=3e-4, weight_decay=5e-2,
                           betas=(0.9, 0.95), batch_size=512, mask_ratio=0.9),
    "atc": ObjectiveConfig("atc", epochs=100, base_lr=3e-4, weight_decay=1e-5,
                           betas=(0.9, 0.999), batch_size=512, k=3),
    "siammae": ObjectiveConfig("siammae", epochs=100, base_lr=3e-4, weight_decay=5e-2,
                               betas=(0.9, 0.95), batch_size=512, k=(1, 3),
                               mask_ratio=0.95),
    "r3m": ObjectiveConfig("r3m", epochs=100, base_lr=3e-4, weight_decay=1e-5,
                           betas=(0.9, 0.999), batch_size=512, k=3, k2=6),
    "bc": ObjectiveConfig("bc", epochs=100, base_lr=3e-4, weight_decay=1e-5,
                          betas=(0.9, 0.999), batch_size=512),
    "spr": ObjectiveConfig("spr", epochs=25, base_lr=3e-4, weight_decay=1e-4,
                           betas=(0.9, 0.999), batch_size=128, seq_steps=4),
    "idm": ObjectiveConfig("idm", epochs=100, early_stop=30, base_lr=3e-4,
                           weight_decay=1e-5, betas=(0.9, 0.999), batch_size=512),
    "spr_idm": ObjectiveConfig("spr_idm", epochs=25, base_lr=3e-5, weight_decay=1e-5,
                               betas=(0.9, 0.999), batch_size=128, seq_steps=4),
    "cql_m": ObjectiveConfig("cql_m", epochs=100, base_lr=1e-4, weight_decay=1e-5,
                             betas=(0.9, 0.95), batch_size=512, cql_coef=0.1,
                             gamma=0.99),
    "cql_d": ObjectiveConfig("cql_d", epochs=100, base_lr=1e-4, weight_decay=1e-5,
                             betas=(0.9, 0.95), batch_size=512, cql_coef=0.1,
                             gamma=0.99),
    "dt": ObjectiveConfig("dt", epochs=12, base_lr=1e-4, weight_decay=5e-2,
                          betas=(0.9, 0.95), batch_size=64, seq_steps=8,
                          reward_scale=0.01),
}

OBJECTIVE_NAMES = tuple(DEFAULT_CONFIGS)


class Objective(nn.Module):
    """Base class; subclasses set `kind` and implement `compute`."""

    kind = "image"  # sampling view kind: image | video | demo | trajectory

    def __init__(self, stack, config: ObjectiveConfig,
                 augment: AugmentSpec | None = None):
        super().__init__()
        self.stack = stack
        self.config = config
        self.augment = augment if augment is not None else AugmentSpec()
        self._mirror_pairs: list[tuple[nn.Module, nn.Module]] = []

    # ---------------------------------------------------------------- views
    def view(self, frames: np.ndarray, rng: np.random.Generator) -> torch.Tensor:
        """Augment a uint8 frame-stack array into a model-dtype tensor.

        Accepts (B, 4, 84, 84) or (B, T, 4, 84, 84); each stack is augmented
        independently.
        """
        arr = np.asarray(frames)
        lead = arr.shape[:-3]
        flat = arr.reshape((-1,) + arr.shape[-3:])
        out = augment_stack(flat, self.augment, rng)
        dtype = next(self.stack.parameters()).dtype
        return torch.from_numpy(out.reshape(lead + out.shape[-3:])).to(dtype)

    # --------------------------------------------------------------- mirror
    def add_mirror(self, name: str, online: nn.Module) -> nn.Module:
        mirror = make_mirror(online)
        self.add_module(name, mirror)
        self._mirror_pairs.append((mirror, online))
        return mirror

    @property
    def uses_mirror(self) -> bool:
        return bool(self._mirror_pairs)

    def update_mirror(self, tau: float) -> None:
        for mirror, online in self._mirror_pairs:
            ema_update(mirror, online, tau)

    def sync_mirror(self) -> None:
        """Hard-copy online weights into the mirror (used after re-seeding)."""
        for mirror, online in self._mirror_pairs:
            mirror.load_state_dict(online.state_dict())

    # ----------------------------------------------------------------- loss
    def sample_kwargs(self) -> dict:
        return {}

    def compute(self, batch, rng: np.random.Generator) -> LossOutput:
        raise NotImplementedError

    def finalize(self, loss: torch.Tensor, diagnostics: dict) -> LossOutput:
        if not torch.isfinite(loss):
            raise FloatingPointError(f"{self.config.name}: non-finite loss")
        return LossOutput(loss=loss, diagnostics={k: float(v) for k, v in diagnostics.items()})

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]
