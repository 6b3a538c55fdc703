"""Dense float64 matrix primitives shared by the rest of the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The one wrapper
type is :class:`EmbeddingBatch`, which carries an explicit flag recording that
its rows have been L2-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFinite, NonFiniteLoss, ShapeMismatch, ZeroRowNorm

# Rows with norm below this are treated as zero.
MIN_ROW_NORM = 1e-30


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Coerce ``m`` to a 2-D float64 array, rejecting NaN/Inf."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class EmbeddingBatch:
    """An N x d matrix of row embeddings."""

    matrix: np.ndarray
    normalized: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.matrix[i]


def l2_normalize_rows(m) -> EmbeddingBatch:
    """Scale every row to unit Euclidean norm.

    Raises:
        ZeroRowNorm: if any row norm is below ``MIN_ROW_NORM``.
    """
    if isinstance(m, EmbeddingBatch):
        if m.normalized:
            return m
        m = m.matrix
    a = as_matrix(m)
    norms = np.sqrt(np.einsum("ij,ij->i", a, a))
    bad = np.flatnonzero(norms < MIN_ROW_NORM)
    if bad.size:
        raise ZeroRowNorm(int(bad[0]))
    return EmbeddingBatch(a / norms[:, None], normalized=True)


def gram(a: EmbeddingBatch, b: EmbeddingBatch) -> np.ndarray:
    """Cosine-similarity matrix ``out[i, j] = <a_i, b_j>``."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding widths differ: {a.dim} vs {b.dim}")
    if not (a.normalized and b.normalized):
        raise DimensionMismatch("gram expects L2-normalized batches")
    return a.matrix @ b.matrix.T


def row_softmax(m, inv_temp: float) -> np.ndarray:
    """Softmax of ``inv_temp * m`` along each row, max-subtracted per row."""
    if not inv_temp > 0:
        raise ValueError(f"inv_temp must be positive, got {inv_temp}")
    a = as_matrix(m) * inv_temp
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy_rows(target, prob) -> float:
    """Mean over rows of ``-sum_j target_ij * log(prob_ij)``.

    Entries with zero target contribute exactly zero, including where the
    probability is also zero.
    """
    t = np.asarray(target, dtype=np.float64)
    p = np.asarray(prob, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 2:
        raise ShapeMismatch(f"target {t.shape} vs prob {p.shape}")
    mask = t > 0
    with np.errstate(divide="ignore"):
        terms = np.where(mask, t * np.log(np.where(mask, p, 1.0)), 0.0)
    loss = -terms.sum() / t.shape[0]
    if not np.isfinite(loss):
        raise NonFiniteLoss("cross-entropy is not finite (zero probability under positive target)")
    return float(loss)


def ordered_sum(a: np.ndarray, axis: int | None = None) -> np.ndarray:
    """Sum after sorting along ``axis``.

    The result depends only on the multiset of summands, so permuting the
    input along ``axis`` gives bit-identical sums.
    """
    if axis is None:
        return np.sort(a, axis=None).sum()
    return np.sort(a, axis=axis).sum(axis=axis, keepdims=True)


def row_log_softmax(m, inv_temp: float) -> np.ndarray:
    """Log of :func:`row_softmax`, computed without forming the probabilities."""
    if not inv_temp > 0:
        raise ValueError(f"inv_temp must be positive, got {inv_temp}")
    a = as_matrix(m) * inv_temp
    a = a - a.max(axis=1, keepdims=True)
    return a - np.log(np.exp(a).sum(axis=1, keepdims=True))


def cross_entropy_log_rows(target, log_prob) -> float:
    """:func:`cross_entropy_rows` taking log-probabilities directly."""
    t = np.asarray(target, dtype=np.float64)
    lp = np.asarray(log_prob, dtype=np.float64)
    if t.shape != lp.shape or t.ndim != 2:
        raise ShapeMismatch(f"target {t.shape} vs log_prob {lp.shape}")
    mask = t > 0
    loss = -np.where(mask, t * np.where(mask, lp, 0.0), 0.0).sum() / t.shape[0]
    if not np.isfinite(loss):
        raise NonFiniteLoss("cross-entropy is not finite")
    return float(loss)
