from ..augment import AugmentSpec
from .base import DEFAULT_CONFIGS, OBJECTIVE_NAMES, LossOutput, Objective, ObjectiveConfig
from .contrastive import Atc, Curl, R3m
from .demonstration import (
    BehaviorCloning,
    InverseDynamics,
    SelfPrediction,
    SelfPredictionWithInverse,
)
from .infonce import grid_info_nce, info_nce
from .masked import (
    CrossFrameReconstruction,
    MaskedReconstruction,
    masked_token_count,
    pixel_patches,
    sample_token_mask,
)
from .trajectory import ConservativeQ, ConservativeQDistributional, SequenceModel

OBJECTIVES: dict[str, type[Objective]] = {
    "curl": Curl,
    "mae": MaskedReconstruction,
    "atc": Atc,
    "siammae": CrossFrameReconstruction,
    "r3m": R3m,
    "bc": BehaviorCloning,
    "spr": SelfPrediction,
    "idm": InverseDynamics,
    "spr_idm": SelfPredictionWithInverse,
    "cql_m": ConservativeQ,
    "cql_d": ConservativeQDistributional,
    "dt": SequenceModel,
}


def build_objective(name: str, stack, config: ObjectiveConfig | None = None,
                    augment: AugmentSpec | None = None, **overrides) -> Objective:
    if name not in OBJECTIVES:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(OBJECTIVES)}")
    cfg = config if config is not None else DEFAULT_CONFIGS[name]
    if overrides:
        cfg = cfg.replace(**overrides)
    return OBJECTIVES[name](stack, cfg, augment)


__all__ = [
    "AugmentSpec",
    "DEFAULT_CONFIGS",
    "OBJECTIVE_NAMES",
    "OBJECTIVES",
    "LossOutput",
    "Objective",
    "ObjectiveConfig",
    "build_objective",
    "info_nce",
    "grid_info_nce",
    "masked_token_count",
    "pixel_patches",
    "sample_token_mask",
    "Curl",
    "Atc",
    "R3m",
    "MaskedReconstruction",
    "CrossFrameReconstruction",
    "BehaviorCloning",
    "InverseDynamics",
    "SelfPrediction",
    "SelfPredictionWithInverse",
    "ConservativeQ",
    "ConservativeQDistributional",
    "SequenceModel",
]
