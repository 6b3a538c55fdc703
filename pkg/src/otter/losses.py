"""Contrastive and distillation losses with closed-form gradients.

The student is two bias-free linear maps followed by row L2-normalization.
For logits ``L = Zv Zt^T`` and inverse temperature ``s`` the image side
predicts ``P_v = softmax(s L)`` over captions and the text side predicts
``P_t = softmax(s L^T)`` over images. The training objective is::

    alpha * (CE(I, P_v) + CE(I, P_t)) + (1 - alpha) * (CE(Q_v, P_v) + CE(Q_t, P_t))

where ``Q_v`` and ``Q_t`` come from the teacher and are treated as constants.
Because cross-entropy is linear in its target, the gradient only sees the
mixed target ``alpha * I + (1 - alpha) * Q``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MethodUnknown, NonFiniteLoss, ShapeMismatch
from .numerics import (
    EmbeddingBatch,
    cross_entropy_log_rows,
    gram,
    l2_normalize_rows,
    row_log_softmax,
)
from .sinkhorn import SinkhornConfig
from .state import METHODS, EncoderState, GradientBundle, PairBatch, TrainConfig
from .targets import (
    SimilarityConfig,
    TargetDistribution,
    kd_target,
    label_smoothing_target,
    otter_target,
    similarity_matrix,
)


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    info_nce_v: float
    info_nce_t: float
    distill_v: float
    distill_t: float
    alpha: float


def _check_pair(zv: EmbeddingBatch, zt: EmbeddingBatch) -> None:
    if zv.n != zt.n or zv.dim != zt.dim:
        raise DimensionMismatch(f"image batch {zv.matrix.shape} vs text batch {zt.matrix.shape}")


def info_nce(zv: EmbeddingBatch, zt: EmbeddingBatch, inv_temp: float) -> tuple[float, float]:
    """Hard-label contrastive loss for each direction (image->text, text->image)."""
    _check_pair(zv, zt)
    logits = gram(zv, zt)
    eye = np.eye(zv.n)
    loss_v = cross_entropy_log_rows(eye, row_log_softmax(logits, inv_temp))
    loss_t = cross_entropy_log_rows(eye, row_log_softmax(logits.T, inv_temp))
    return loss_v, loss_t


def distill_loss(
    zv: EmbeddingBatch,
    zt: EmbeddingBatch,
    inv_temp: float,
    target_v: TargetDistribution,
    target_t: TargetDistribution,
) -> tuple[float, float]:
    """Cross-entropy of the student's predictions against soft targets."""
    _check_pair(zv, zt)
    n = zv.n
    if target_v.matrix.shape != (n, n) or target_t.matrix.shape != (n, n):
        raise ShapeMismatch(
            f"targets {target_v.matrix.shape}/{target_t.matrix.shape} do not match batch size {n}"
        )
    logits = gram(zv, zt)
    loss_v = cross_entropy_log_rows(target_v.matrix, row_log_softmax(logits, inv_temp))
    loss_t = cross_entropy_log_rows(target_t.matrix, row_log_softmax(logits.T, inv_temp))
    return loss_v, loss_t


def encode(weights: np.ndarray, features: np.ndarray) -> tuple[EmbeddingBatch, np.ndarray]:
    """Linear map followed by row normalization; also returns the row norms."""
    if features.shape[1] != weights.shape[0]:
        raise DimensionMismatch(
            f"features have width {features.shape[1]} but encoder expects {weights.shape[0]}"
        )
    raw = features @ weights
    z = l2_normalize_rows(raw)
    return z, np.sqrt(np.einsum("ij,ij->i", raw, raw))


def build_targets(
    teacher: EncoderState, batch: PairBatch, cfg: TrainConfig
) -> tuple[TargetDistribution, TargetDistribution] | None:
    """Soft targets ``(Q_v, Q_t)`` for ``cfg.method``; ``None`` for plain InfoNCE."""
    if cfg.method not in METHODS:
        raise MethodUnknown(f"unknown method {cfg.method!r}")
    n = batch.n
    if cfg.method == "infonce":
        return None
    if cfg.method == "ls":
        m = label_smoothing_target(n)
        return m, m
    tv, _ = encode(teacher.w_image, batch.image_features)
    tt, _ = encode(teacher.w_text, batch.text_features)
    if cfg.method == "kd":
        return (
            kd_target(tv, tt, teacher.inv_temp, "image"),
            kd_target(tv, tt, teacher.inv_temp, "text"),
        )
    sim = SimilarityConfig(cfg.gamma_v, cfg.gamma_t, cfg.eta)
    sk = SinkhornConfig(cfg.lam, cfg.sinkhorn_iters)
    return (
        otter_target(similarity_matrix(tv, tt, sim, "image"), sk),
        otter_target(similarity_matrix(tv, tt, sim, "text"), sk),
    )


def _normalize_backward(grad_z: np.ndarray, z: np.ndarray, norms: np.ndarray) -> np.ndarray:
    # d(x/|x|)/dx = (I - z z^T) / |x|, applied row by row.
    radial = np.einsum("ij,ij->i", grad_z, z)
    return (grad_z - radial[:, None] * z) / norms[:, None]


def loss_and_gradients(
    encoder: EncoderState,
    teacher: EncoderState,
    batch: PairBatch,
    cfg: TrainConfig,
    targets: tuple[TargetDistribution, TargetDistribution] | None = None,
) -> tuple[LossBreakdown, GradientBundle]:
    """Loss for one batch and its exact gradient w.r.t. the student parameters.

    ``teacher`` only feeds the soft targets and receives no gradient. Pass
    precomputed ``targets`` to skip rebuilding them.
    """
    n = batch.n
    if n < 2:
        raise ShapeMismatch("contrastive loss needs a batch of at least 2 pairs")
    if targets is None:
        targets = build_targets(teacher, batch, cfg)

    zv, norm_v = encode(encoder.w_image, batch.image_features)
    zt, norm_t = encode(encoder.w_text, batch.text_features)
    s = encoder.inv_temp
    logits = gram(zv, zt)
    logp_v = row_log_softmax(logits, s)
    logp_t = row_log_softmax(logits.T, s)
    eye = np.eye(n)
    info_v = cross_entropy_log_rows(eye, logp_v)
    info_t = cross_entropy_log_rows(eye, logp_t)

    if targets is None:
        alpha = 1.0
        dist_v = dist_t = 0.0
        mixed_v = mixed_t = eye
    else:
        alpha = cfg.alpha
        q_v, q_t = targets
        dist_v = cross_entropy_log_rows(q_v.matrix, logp_v)
        dist_t = cross_entropy_log_rows(q_t.matrix, logp_t)
        mixed_v = alpha * eye + (1.0 - alpha) * q_v.matrix
        mixed_t = alpha * eye + (1.0 - alpha) * q_t.matrix
    total = alpha * (info_v + info_t) + (1.0 - alpha) * (dist_v + dist_t)
    if not np.isfinite(total):
        raise NonFiniteLoss(f"loss is not finite: {total}")

    # d loss / d (s * logits) per direction
    resid_v = (np.exp(logp_v) - mixed_v) / n
    resid_t = (np.exp(logp_t) - mixed_t) / n
    d_logits = s * (resid_v + resid_t.T)
    d_inv_temp = float(np.sum(resid_v * logits) + np.sum(resid_t * logits.T))

    d_zv = d_logits @ zt.matrix
    d_zt = d_logits.T @ zv.matrix
    d_xv = _normalize_backward(d_zv, zv.matrix, norm_v)
    d_xt = _normalize_backward(d_zt, zt.matrix, norm_t)
    grads = GradientBundle(
        d_weights_image=batch.image_features.T @ d_xv,
        d_weights_text=batch.text_features.T @ d_xt,
        d_log_inv_temp=s * d_inv_temp,
    )
    breakdown = LossBreakdown(total, info_v, info_t, dist_v, dist_t, alpha)
    return breakdown, grads


def loss_value(
    encoder: EncoderState,
    teacher: EncoderState,
    batch: PairBatch,
    cfg: TrainConfig,
    targets: tuple[TargetDistribution, TargetDistribution] | None = None,
) -> float:
    """Scalar loss only, for finite-difference checks."""
    return loss_and_gradients(encoder, teacher, batch, cfg, targets)[0].total
