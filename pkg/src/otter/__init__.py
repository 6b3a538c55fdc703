"""Optimal-transport soft targets for contrastive image/text training."""

from .errors import OtterError
from .evaluation import (
    AttributeSample,
    ClassIndex,
    EvalReport,
    NoiseStats,
    compositional_queries,
    compositionality_scores,
    flat_hit_at_k,
    knn_predict,
    noise_stats,
)
from .losses import LossBreakdown, distill_loss, info_nce, loss_and_gradients
from .numerics import EmbeddingBatch, cross_entropy_rows, gram, l2_normalize_rows, row_softmax
from .sinkhorn import SinkhornConfig, TransportPlan, sinkhorn, sinkhorn_converged
from .state import EncoderState, GradientBundle, PairBatch, TeacherState, TrainConfig
from .synthdata import SynthConfig, SynthDataset, generate, load_embeddings, save_embeddings
from .targets import (
    SimilarityConfig,
    TargetDistribution,
    kd_target,
    label_smoothing_target,
    mix_with_identity,
    otter_target,
    similarity_matrix,
)
from .trainer import cosine_lr, ema_update, sgd_step, train

__version__ = "0.1.0"

__all__ = [
    "AttributeSample",
    "ClassIndex",
    "EmbeddingBatch",
    "EncoderState",
    "EvalReport",
    "GradientBundle",
    "LossBreakdown",
    "NoiseStats",
    "OtterError",
    "PairBatch",
    "SimilarityConfig",
    "SinkhornConfig",
    "SynthConfig",
    "SynthDataset",
    "TargetDistribution",
    "TeacherState",
    "TrainConfig",
    "TransportPlan",
    "compositional_queries",
    "compositionality_scores",
    "cosine_lr",
    "cross_entropy_rows",
    "distill_loss",
    "ema_update",
    "flat_hit_at_k",
    "generate",
    "gram",
    "info_nce",
    "kd_target",
    "knn_predict",
    "l2_normalize_rows",
    "label_smoothing_target",
    "load_embeddings",
    "loss_and_gradients",
    "mix_with_identity",
    "noise_stats",
    "otter_target",
    "row_softmax",
    "save_embeddings",
    "sgd_step",
    "similarity_matrix",
    "sinkhorn",
    "sinkhorn_converged",
    "train",
]
