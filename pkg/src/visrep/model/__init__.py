from .backbone import Backbone, BasicBlock, Bottleneck, PRESETS, group_norm, make_backbone
from .heads import HeadBank
from .neck import GameNeck, instance_norm
from .stack import (
    CHECKPOINT_VERSION,
    CheckpointError,
    EncoderStack,
    StackConfig,
    ema_update,
    freeze_backbone,
    load_checkpoint,
    load_modules,
    make_mirror,
    reinit_neck_head,
    retarget,
    save_checkpoint,
    seeded_init,
    tau_at,
)

__all__ = [
    "Backbone",
    "BasicBlock",
    "Bottleneck",
    "PRESETS",
    "group_norm",
    "make_backbone",
    "HeadBank",
    "GameNeck",
    "instance_norm",
    "CHECKPOINT_VERSION",
    "CheckpointError",
    "EncoderStack",
    "StackConfig",
    "ema_update",
    "freeze_backbone",
    "load_checkpoint",
    "load_modules",
    "make_mirror",
    "reinit_neck_head",
    "retarget",
    "save_checkpoint",
    "seeded_init",
    "tau_at",
]
