"""Downstream adaptation of a pre-trained encoder stack.

Two protocols share the same entry conditions (frozen backbone, freshly
initialized neck/head over the target game): offline behavioral cloning on
expert demonstrations, and online distributional Q-learning against an
environment adapter.
"""

from .bc import (
    BCFinetuneResult,
    ExpertData,
    OfflineBCSpec,
    finetune_offline_bc,
    load_pretrained_stack,
)
from .envs import ChainEnv, EnvironmentAdapter, EnvironmentFault, evaluate_policy, run_episode
from .rainbow import (
    DuelingQHead,
    PrioritizedReplay,
    RainbowResult,
    RainbowSpec,
    beta_at,
    epsilon_at,
    finetune_online_rl,
    importance_weights,
    nstep_return,
    priority_from_td,
    priority_weight,
)

__all__ = [
    "BCFinetuneResult",
    "ChainEnv",
    "DuelingQHead",
    "EnvironmentAdapter",
    "EnvironmentFault",
    "ExpertData",
    "OfflineBCSpec",
    "PrioritizedReplay",
    "RainbowResult",
    "RainbowSpec",
    "beta_at",
    "epsilon_at",
    "evaluate_policy",
    "finetune_offline_bc",
    "finetune_online_rl",
    "importance_weights",
    "load_pretrained_stack",
    "nstep_return",
    "priority_from_td",
    "priority_weight",
    "run_episode",
]
