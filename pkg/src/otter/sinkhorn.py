"""Entropic optimal transport by alternating row/column scaling.

Given a square similarity matrix ``S`` the transport plan maximizes
``<M, S> + lam * H(M)`` over matrices whose rows and columns each sum to
``1/N``. The optimum has the form ``diag(r) exp(S / lam) diag(c)``; the
scalings are found with Sinkhorn-Knopp sweeps. The returned plan is
renormalized so each row sums to one, which is the form the losses consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NotSquare
from .numerics import as_matrix, ordered_sum


@dataclass(frozen=True)
class SinkhornConfig:
    lam: float = 0.15
    n_iter: int = 5
    marginal_tolerance: float = 1e-9

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if self.n_iter < 0:
            raise ValueError(f"n_iter must be non-negative, got {self.n_iter}")


@dataclass(frozen=True)
class TransportPlan:
    """Row-stochastic matching plan plus pre-normalization diagnostics.

    ``row_marginal_error`` and ``col_marginal_error`` are ``max |sum - 1/N|``
    over rows/columns, measured just before the final row normalization.
    """

    matrix: np.ndarray
    row_marginal_error: float
    col_marginal_error: float
    iterations: int
    converged: bool = True


def _square(s) -> np.ndarray:
    a = as_matrix(s, "similarity matrix")
    if a.shape[0] != a.shape[1]:
        raise NotSquare(f"similarity matrix must be square, got {a.shape}")
    return a


def _initial_kernel(s: np.ndarray, lam: float) -> np.ndarray:
    # Shifting by the global max is absorbed by the total-mass normalization.
    x = s / lam
    t = np.exp(x - x.max())
    return t / ordered_sum(t)


def _scale(t: np.ndarray, axis: int, factor: float) -> None:
    """Divide each row (axis=1) or column (axis=0) by ``factor`` times its sum."""
    sums = ordered_sum(t, axis=axis)
    if np.any(sums <= 0) or not np.all(np.isfinite(sums)):
        side = "row" if axis == 1 else "column"
        raise NonFinite(f"a {side} of the transport kernel underflowed to zero mass")
    t /= sums * factor


def _marginal_errors(t: np.ndarray) -> tuple[float, float]:
    n = t.shape[0]
    row = float(np.max(np.abs(ordered_sum(t, axis=1) - 1.0 / n)))
    col = float(np.max(np.abs(ordered_sum(t, axis=0) - 1.0 / n)))
    return row, col


def _sweep(t: np.ndarray) -> None:
    n = t.shape[0]
    _scale(t, axis=1, factor=n)
    _scale(t, axis=0, factor=n)


def _finish(t: np.ndarray, iterations: int, converged: bool) -> TransportPlan:
    row_err, col_err = _marginal_errors(t)
    _scale(t, axis=1, factor=1.0)
    return TransportPlan(t, row_err, col_err, iterations, converged)


def sinkhorn(s, cfg: SinkhornConfig = SinkhornConfig()) -> TransportPlan:
    """Run exactly ``cfg.n_iter`` row-then-column sweeps, then row-normalize.

    With ``n_iter=0`` this is a row softmax of ``s / lam``.
    """
    a = _square(s)
    t = _initial_kernel(a, cfg.lam)
    for _ in range(cfg.n_iter):
        _sweep(t)
    return _finish(t, cfg.n_iter, converged=True)


def sinkhorn_converged(s, lam: float, tol: float = 1e-10, max_iter: int = 100_000) -> TransportPlan:
    """Sweep until both marginal errors drop below ``tol``.

    Hitting ``max_iter`` is not an error: the plan is returned with
    ``converged=False``.
    """
    a = _square(s)
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    t = _initial_kernel(a, lam)
    for it in range(1, max_iter + 1):
        _sweep(t)
        row_err, col_err = _marginal_errors(t)
        if row_err < tol and col_err < tol:
            return _finish(t, it, converged=True)
    return _finish(t, max_iter, converged=False)


def plan_entropy(m: np.ndarray) -> float:
    """Shannon entropy ``-sum m log m`` with ``0 log 0 = 0``."""
    m = np.asarray(m, dtype=np.float64)
    pos = m[m > 0]
    return float(-(pos * np.log(pos)).sum())
