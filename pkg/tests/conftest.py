import numpy as np
import pytest
from scipy.special import logsumexp

from otter.numerics import l2_normalize_rows
from otter.state import EncoderState, PairBatch, TeacherState


def random_unit_batch(rng, n, d):
    return l2_normalize_rows(rng.standard_normal((n, d)))


def log_domain_sinkhorn(s, lam, iters):
    """Reference Sinkhorn in log space (scipy logsumexp), same sweep order.

    Shares no code with the package implementation; used as an oracle.
    """
    n = s.shape[0]
    log_t = s / lam
    log_t = log_t - logsumexp(log_t)
    for _ in range(iters):
        log_t = log_t - (logsumexp(log_t, axis=1, keepdims=True) + np.log(n))
        log_t = log_t - (logsumexp(log_t, axis=0, keepdims=True) + np.log(n))
    return np.exp(log_t - logsumexp(log_t, axis=1, keepdims=True))


def random_problem(seed, n=8, d_in=6, d_emb=4):
    rng = np.random.default_rng(seed)
    student = EncoderState.initialize(d_in, d_in, d_emb, seed=seed)
    teacher = TeacherState.from_student(EncoderState.initialize(d_in, d_in, d_emb, seed=seed + 1000))
    batch = PairBatch(rng.standard_normal((n, d_in)), rng.standard_normal((n, d_in)))
    return student, teacher, batch


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
