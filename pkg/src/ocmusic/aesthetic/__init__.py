"""Aesthetic model: basic features, logistic heads, the order/complexity
quotient, training, ablation and pseudo-feature distillation."""
from .basic import FEATURE_NAMES, BasicFeatureVector, extract_basic_features
from .distill import DistillConfig, distill_pseudo, naive_transcribe, transcribe
from .model import (
    GROUPS,
    HEADS,
    AestheticFeatures,
    AestheticModel,
    FeatureNormalizer,
    LRHeadParams,
    OCParams,
    aesthetic_features,
    birkhoff_score,
    classify,
)
from .train import TrainConfig, ablate, synthetic_dataset, train

__all__ = [
    "FEATURE_NAMES", "BasicFeatureVector", "extract_basic_features",
    "DistillConfig", "distill_pseudo", "naive_transcribe", "transcribe",
    "GROUPS", "HEADS", "AestheticFeatures", "AestheticModel", "FeatureNormalizer",
    "LRHeadParams", "OCParams", "aesthetic_features", "birkhoff_score", "classify",
    "TrainConfig", "ablate", "synthetic_dataset", "train",
]
