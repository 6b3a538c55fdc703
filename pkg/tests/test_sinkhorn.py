import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import log_domain_sinkhorn
from otter.errors import NonFinite, NotSquare
from otter.numerics import row_softmax
from otter.sinkhorn import SinkhornConfig, plan_entropy, sinkhorn, sinkhorn_converged


def test_two_by_two_suppressed_diagonal():
    plan = sinkhorn([[-100.0, 1.0], [1.0, -100.0]], SinkhornConfig(0.15, 5))
    m = plan.matrix
    assert m[0, 1] == pytest.approx(1.0, abs=1e-12)
    assert m[1, 0] == pytest.approx(1.0, abs=1e-12)
    assert m[0, 0] <= 1e-12 and m[1, 1] <= 1e-12


def test_zero_iterations_is_row_softmax():
    m = sinkhorn([[2.0, 0.0], [0.0, 2.0]], SinkhornConfig(1.0, 0)).matrix
    # e^2 / (e^2 + 1) and its complement, 60-digit mpmath
    np.testing.assert_allclose(m[0], [0.8807970779778823, 0.11920292202211755], rtol=1e-14)
    m = sinkhorn([[2.0, 0.0], [0.0, 2.0]], SinkhornConfig(0.15, 0)).matrix
    np.testing.assert_allclose(m[0], [0.9999983804058308, 1.6195941692230894e-06], rtol=1e-12)


def test_circulant_three_by_three():
    s = [[-100, 0.9, 0.1], [0.1, -100, 0.9], [0.9, 0.1, -100]]
    m = sinkhorn(s, SinkhornConfig(0.15, 5)).matrix
    # circulant kernel is already balanced, so the plan is 1 / (1 + exp(-0.8 / 0.15))
    closed = 1.0 / (1.0 + math.exp(-16.0 / 3.0))
    assert closed == pytest.approx(0.9951952471128405, abs=1e-15)
    np.testing.assert_allclose(m[0, 1:], [closed, 1 - closed], atol=1e-12)
    np.testing.assert_allclose(np.roll(m[1], -1), m[0], atol=1e-14)
    assert m[0, 0] <= 1e-12


def test_matches_log_domain_reference(rng):
    for lam, iters in [(0.15, 5), (0.5, 3), (0.05, 10), (1.0, 0)]:
        s = rng.uniform(-1, 1, (7, 7))
        np.testing.assert_allclose(sinkhorn(s, SinkhornConfig(lam, iters)).matrix, log_domain_sinkhorn(s, lam, iters), atol=1e-12)


def test_single_entry():
    assert sinkhorn([[0.3]]).matrix.tolist() == [[1.0]]


def test_not_square():
    with pytest.raises(NotSquare):
        sinkhorn(np.zeros((2, 3)))


def test_non_finite_input():
    with pytest.raises(NonFinite):
        sinkhorn([[0.0, np.nan], [0.0, 0.0]])


def test_underflowed_row_is_reported():
    # a row that is -inf relative to everything has no mass after exp
    with pytest.raises(NonFinite):
        sinkhorn([[0.0, 0.0], [-1e6, -1e6]], SinkhornConfig(0.01, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        SinkhornConfig(lam=0.0)
    with pytest.raises(ValueError):
        SinkhornConfig(n_iter=-1)


def test_converged_solution_is_separable(rng):
    n, lam = 6, 0.3
    s = rng.uniform(-1, 1, (n, n))
    plan = sinkhorn_converged(s, lam, tol=1e-13)
    assert plan.converged
    # log M - S / lam must equal a_i + b_j; check with a least-squares fit
    target = (np.log(plan.matrix) - s / lam).ravel()
    design = np.zeros((n * n, 2 * n))
    for i in range(n):
        for j in range(n):
            design[i * n + j, i] = 1
            design[i * n + j, n + j] = 1
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    assert np.max(np.abs(design @ coef - target)) < 1e-9


def test_converged_marginals(rng):
    s = rng.uniform(-1, 1, (9, 9))
    plan = sinkhorn_converged(s, 0.2, tol=1e-12)
    assert plan.converged
    assert plan.row_marginal_error < 1e-12 and plan.col_marginal_error < 1e-12
    np.testing.assert_allclose(plan.matrix.sum(axis=0), 1.0, atol=1e-10)


def test_max_iter_not_an_error():
    s = np.random.default_rng(0).uniform(-1, 1, (8, 8))
    plan = sinkhorn_converged(s, 0.01, tol=1e-15, max_iter=2)
    assert not plan.converged and plan.iterations == 2


def test_column_error_decreases_with_iterations(rng):
    s = rng.uniform(-1, 1, (8, 8))
    errs = [sinkhorn(s, SinkhornConfig(0.2, k)).col_marginal_error for k in range(0, 12)]
    assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_row_shift_invariance(rng):
    s = rng.uniform(-1, 1, (6, 6))
    shift = rng.uniform(-3, 3, (6, 1))
    a = sinkhorn(s, SinkhornConfig(0.15, 5)).matrix
    b = sinkhorn(s + shift, SinkhornConfig(0.15, 5)).matrix
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_entropy_grows_with_lambda(rng):
    s = rng.uniform(-1, 1, (8, 8))
    ents = [plan_entropy(sinkhorn_converged(s, lam, tol=1e-12).matrix) for lam in (0.05, 0.1, 0.3, 1.0, 3.0)]
    assert all(b > a for a, b in zip(ents, ents[1:]))


def test_large_lambda_near_uniform(rng):
    s = rng.uniform(-1, 1, (5, 5))
    np.testing.assert_allclose(sinkhorn_converged(s, 1e4, tol=1e-14).matrix, 0.2, atol=1e-4)


square = st.integers(2, 8).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-1, 1, allow_nan=False))
)


@settings(max_examples=150, deadline=None)
@given(square, st.sampled_from([0.1, 0.15, 0.5, 2.0]), st.integers(0, 8))
def test_rows_stochastic(s, lam, iters):
    m = sinkhorn(s, SinkhornConfig(lam, iters)).matrix
    assert np.all(m >= 0)
    np.testing.assert_allclose(m.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=150, deadline=None)
@given(square, st.randoms(use_true_random=False))
def test_permutation_equivariance(s, rnd):
    n = s.shape[0]
    perm = np.array(rnd.sample(range(n), n))
    a = sinkhorn(s).matrix
    b = sinkhorn(s[np.ix_(perm, perm)]).matrix
    assert np.array_equal(b, a[np.ix_(perm, perm)])


@settings(max_examples=100, deadline=None)
@given(square, st.sampled_from([0.15, 1.0, 3.0]))
def test_zero_iterations_equals_softmax(s, lam):
    np.testing.assert_allclose(sinkhorn(s, SinkhornConfig(lam, 0)).matrix, row_softmax(s, 1.0 / lam), atol=1e-14)


def test_random_matrices_converge():
    rng = np.random.default_rng(7)
    for _ in range(20):
        s = rng.uniform(-1, 1, (16, 16))
        plan = sinkhorn_converged(s, 0.15, tol=1e-12)
        assert plan.converged


def test_all_zero_matrices_are_uniform():
    m = sinkhorn(np.zeros((3, 3)), SinkhornConfig(0.15, 5)).matrix
    np.testing.assert_allclose(m, 1 / 3, atol=1e-16)
    plan = sinkhorn_converged(np.zeros((4, 4)), 0.15, tol=1e-12)
    assert plan.converged and plan.iterations == 1
    np.testing.assert_allclose(plan.matrix, 0.25, atol=1e-16)
