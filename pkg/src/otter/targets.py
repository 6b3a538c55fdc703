"""Soft matching targets for the generalized contrastive loss.

Each builder returns a :class:`TargetDistribution`: an N x N row-stochastic
matrix whose row ``i`` is a distribution over which caption image ``i``
should match. Four kinds exist:

* ``hard``: the identity (plain InfoNCE).
* ``label_smoothing``: uniform mass over the off-diagonal entries.
* ``kd``: teacher row-softmax of image/text cosine similarities.
* ``otter``: Sinkhorn plan over a teacher similarity matrix whose diagonal
  is suppressed, so all mass goes to unpaired captions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import AlphaOutOfRange, DegenerateRow, DimensionMismatch
from .numerics import EmbeddingBatch, gram, row_softmax
from .sinkhorn import SinkhornConfig, sinkhorn

Side = Literal["image", "text"]
TargetKind = Literal["hard", "label_smoothing", "kd", "otter"]


@dataclass(frozen=True)
class SimilarityConfig:
    gamma_v: float = 1.0
    gamma_t: float = 1.0
    eta: float = 100.0


@dataclass(frozen=True)
class TargetDistribution:
    matrix: np.ndarray
    kind: TargetKind
    alpha: float = 0.0

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _check_pair(teacher_v: EmbeddingBatch, teacher_t: EmbeddingBatch) -> None:
    if teacher_v.n != teacher_t.n:
        raise DimensionMismatch(f"batch sizes differ: {teacher_v.n} vs {teacher_t.n}")
    if teacher_v.dim != teacher_t.dim:
        raise DimensionMismatch(f"embedding widths differ: {teacher_v.dim} vs {teacher_t.dim}")


def similarity_matrix(
    teacher_v: EmbeddingBatch,
    teacher_t: EmbeddingBatch,
    cfg: SimilarityConfig = SimilarityConfig(),
    side: Side = "image",
) -> np.ndarray:
    """Teacher similarity used as the transport reward.

    ``gamma_v * Zv Zv^T + gamma_t * Zt Zt^T + cross - eta * I`` where the cross
    term is ``Zv Zt^T`` for the image side and ``Zt Zv^T`` for the text side.
    """
    _check_pair(teacher_v, teacher_t)
    n = teacher_v.n
    s = np.zeros((n, n))
    if cfg.gamma_v:
        s += cfg.gamma_v * gram(teacher_v, teacher_v)
    if cfg.gamma_t:
        s += cfg.gamma_t * gram(teacher_t, teacher_t)
    if side == "image":
        s += gram(teacher_v, teacher_t)
    elif side == "text":
        s += gram(teacher_t, teacher_v)
    else:
        raise ValueError(f"side must be 'image' or 'text', got {side!r}")
    if cfg.eta:
        s[np.diag_indices(n)] -= cfg.eta
    return s


def otter_target(s, sk: SinkhornConfig = SinkhornConfig()) -> TargetDistribution:
    """Sinkhorn plan over ``s`` as an unmixed target (``alpha = 0``)."""
    s = np.asarray(s, dtype=np.float64)
    if s.ndim == 2 and s.shape[0] == 1 and s.shape[1] == 1:
        raise DegenerateRow("a batch of one has no unpaired caption to match")
    plan = sinkhorn(s, sk)
    return TargetDistribution(plan.matrix, "otter", 0.0)


def kd_target(
    teacher_v: EmbeddingBatch,
    teacher_t: EmbeddingBatch,
    inv_temp: float,
    side: Side = "image",
) -> TargetDistribution:
    """Teacher row-softmax of cross-modal similarities; diagonal kept."""
    _check_pair(teacher_v, teacher_t)
    if side == "image":
        logits = gram(teacher_v, teacher_t)
    elif side == "text":
        logits = gram(teacher_t, teacher_v)
    else:
        raise ValueError(f"side must be 'image' or 'text', got {side!r}")
    return TargetDistribution(row_softmax(logits, inv_temp), "kd", 0.0)


def label_smoothing_target(n: int) -> TargetDistribution:
    if n < 2:
        raise DegenerateRow(f"label smoothing needs at least 2 samples, got {n}")
    m = np.full((n, n), 1.0 / (n - 1))
    np.fill_diagonal(m, 0.0)
    return TargetDistribution(m, "label_smoothing", 0.0)


def hard_target(n: int) -> TargetDistribution:
    return TargetDistribution(np.eye(n), "hard", 1.0)


def mix_with_identity(m: TargetDistribution, alpha: float) -> TargetDistribution:
    """``alpha * I + (1 - alpha) * m``; the diagonal of the result is ``alpha``."""
    if not 0.0 <= alpha <= 1.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 1], got {alpha}")
    n = m.n
    mixed = (1.0 - alpha) * m.matrix
    mixed[np.diag_indices(n)] = alpha + (1.0 - alpha) * np.diag(m.matrix)
    return TargetDistribution(mixed, m.kind, alpha)
