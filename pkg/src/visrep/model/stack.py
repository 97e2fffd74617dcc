"""Encoder stack assembly, momentum mirrors, and checkpoint io."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict, replace

import torch
from torch import nn

from .backbone import make_backbone
from .heads import HeadBank
from .neck import GameNeck

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class StackConfig:
    games: tuple[str, ...]
    backbone: str = "r50like"
    neck_hidden: int = 1024
    latent: int = 512
    action_dim: int = 18

    def to_dict(self) -> dict:
        d = asdict(self)
        d["games"] = list(self.games)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StackConfig":
        d = dict(d)
        d["games"] = tuple(d["games"])
        return cls(**d)


class EncoderStack(nn.Module):
    """Backbone -> game neck -> per-game action head."""

    def __init__(self, config: StackConfig, seed: int | None = None):
        super().__init__()
        self.config = config
        self.backbone = make_backbone(config.backbone)
        d_z, h_z, w_z = self.backbone.out_shape
        self.neck = GameNeck(config.games, d_z, (h_z, w_z),
                             hidden=config.neck_hidden, latent=config.latent)
        self.head = HeadBank(config.games, config.latent, config.action_dim)
        if seed is not None:
            seeded_init(self, seed)

    def encode(self, obs: torch.Tensor, games) -> torch.Tensor:
        return self.neck(self.backbone(obs), games)

    def forward(self, obs: torch.Tensor, games) -> torch.Tensor:
        return self.head(self.encode(obs, games), games)


def seeded_init(module: nn.Module, seed: int) -> None:
    """Re-draw every child's default initialization from a fixed seed."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        for m in module.modules():
            if hasattr(m, "reset_parameters"):
                m.reset_parameters()
    # ParameterDict embeddings have no reset_parameters; restore ones-init.
    for m in module.modules():
        if isinstance(m, GameNeck):
            with torch.no_grad():
                for p in m.spatial.values():
                    p.fill_(1.0)


def make_mirror(module: nn.Module) -> nn.Module:
    """Detached deep copy that tracks `module` through `ema_update`."""
    mirror = copy.deepcopy(module)
    for p in mirror.parameters():
        p.requires_grad_(False)
    mirror.eval()
    return mirror


@torch.no_grad()
def ema_update(mirror: nn.Module, online: nn.Module, tau: float) -> None:
    """shadow <- tau * shadow + (1 - tau) * online, for params and buffers."""
    for ps, po in zip(mirror.parameters(), online.parameters()):
        ps.mul_(tau).add_(po, alpha=1.0 - tau)
    for bs, bo in zip(mirror.buffers(), online.buffers()):
        if bs.dtype.is_floating_point:
            bs.mul_(tau).add_(bo, alpha=1.0 - tau)
        else:
            bs.copy_(bo)


def tau_at(step: int, total_steps: int, start: float = 0.99, end: float = 0.999) -> float:
    """Momentum coefficient, linear in step: start at step 0, end at the last step."""
    if total_steps <= 1:
        return end
    frac = min(max(step / (total_steps - 1), 0.0), 1.0)
    return start + (end - start) * frac


def freeze_backbone(stack: EncoderStack) -> None:
    for p in stack.backbone.parameters():
        p.requires_grad_(False)


def reinit_neck_head(stack: EncoderStack, seed: int) -> None:
    """Fresh neck/head parameters (backbone untouched) for transfer runs."""
    seeded_init(stack.neck, seed)
    seeded_init(stack.head, seed + 1)


def retarget(stack: EncoderStack, games, seed: int) -> None:
    """Swap in a fresh neck/head over a new game set (downstream transfer).

    The backbone keeps its weights; `stack.config` tracks the new games so
    checkpoints written afterwards describe what the modules actually hold.
    """
    games = tuple(games)
    d_z, h_z, w_z = stack.backbone.out_shape
    cfg = replace(stack.config, games=games)
    stack.config = cfg
    stack.neck = GameNeck(games, d_z, (h_z, w_z),
                          hidden=cfg.neck_hidden, latent=cfg.latent)
    stack.head = HeadBank(games, cfg.latent, cfg.action_dim)
    seeded_init(stack.neck, seed)
    seeded_init(stack.head, seed + 1)


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path, config: StackConfig, modules: dict[str, nn.Module],
                    meta: dict | None = None) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": config.to_dict(),
        "modules": {name: m.state_dict() for name, m in modules.items()},
        "meta": dict(meta or {}),
    }
    torch.save(payload, path)


def load_checkpoint(path, expected_config: StackConfig | None = None) -> dict:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r}")
    if expected_config is not None:
        saved = payload["config"]
        want = expected_config.to_dict()
        if saved != want:
            diff = sorted(k for k in set(saved) | set(want) if saved.get(k) != want.get(k))
            raise CheckpointError(f"checkpoint config mismatch in fields: {diff}")
    return payload


def load_modules(payload: dict, modules: dict[str, nn.Module],
                 only: tuple[str, ...] | None = None) -> None:
    names = only if only is not None else tuple(modules)
    for name in names:
        modules[name].load_state_dict(payload["modules"][name])
