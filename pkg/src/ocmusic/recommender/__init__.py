"""Aesthetic-aware sequential recommender (masked item prediction)."""
from .metrics import REPORT_KEYS, format_report, hr_ndcg, rank_of_target
from .model import Batch, ModelConfig, attention_head, embed, gelu, init_params, predict_masked, transformer_forward
from .planted import ablate_aesthetic_fusion, aesthetic_signal_sessions, alternating_sessions
from .train import ItemFeatures, TrainConfig, evaluate, leave_one_out, mask_sessions, masked_accuracy, train_recommender
from .vocab import MASK_ID, PAD_ID, Vocabulary

__all__ = [
    "REPORT_KEYS", "format_report", "hr_ndcg", "rank_of_target",
    "Batch", "ModelConfig", "attention_head", "embed", "gelu", "init_params", "predict_masked", "transformer_forward",
    "ablate_aesthetic_fusion", "aesthetic_signal_sessions", "alternating_sessions",
    "ItemFeatures", "TrainConfig", "evaluate", "leave_one_out", "mask_sessions", "masked_accuracy", "train_recommender",
    "MASK_ID", "PAD_ID", "Vocabulary",
]
