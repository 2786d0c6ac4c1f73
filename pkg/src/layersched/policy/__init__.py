"""Recurrent scheduling policy: feature encoding, LSTM/Elman cells built on
numpy, and the policy-gradient trainer that learns to emit cheap plans."""

from .features import (
    FeatureNormalizer,
    LayerFeatures,
    encode_features,
    features_matrix,
)
from .network import (
    PolicyParams,
    greedy_plan,
    init_params,
    policy_forward,
    sample_plan,
)
from .training import (
    EpisodeTrace,
    RoundStats,
    TrainerConfig,
    TrainingResult,
    init_policy,
    load_checkpoint,
    policy_gradient,
    reward,
    save_checkpoint,
    train,
)

__all__ = [
    "FeatureNormalizer",
    "LayerFeatures",
    "encode_features",
    "features_matrix",
    "PolicyParams",
    "greedy_plan",
    "init_params",
    "policy_forward",
    "sample_plan",
    "EpisodeTrace",
    "RoundStats",
    "TrainerConfig",
    "TrainingResult",
    "init_policy",
    "load_checkpoint",
    "policy_gradient",
    "reward",
    "save_checkpoint",
    "train",
]
