import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otter.errors import DimensionMismatch, EmptyLabelSet, EmptyQuery, KTooLarge, NoEligiblePairs, NotSquare
from otter.evaluation import (
    AttributeSample,
    ClassIndex,
    CompositionalQuery,
    average_noise_stats,
    compositional_queries,
    compositionality_scores,
    fingerprint,
    flat_hit_at_k,
    knn_predict,
    matching_probabilities,
    noise_stats,
    random_retrieval,
    retrieve_nearest,
    zero_shot_report,
)
from otter.numerics import l2_normalize_rows


def test_knn_orthonormal_classes():
    index = ClassIndex.from_embeddings(np.eye(3), [10, 20, 30])
    imgs = l2_normalize_rows([[0.1, 1.0, 0.2], [1.0, 0.0, 0.5]])
    assert knn_predict(imgs, index, 2) == [[20, 30], [10, 30]]


def test_knn_tie_goes_to_lower_id():
    index = ClassIndex.from_embeddings(np.array([[0.0, 1.0], [1.0, 0.0]]), [7, 3])
    assert knn_predict(l2_normalize_rows([[1.0, 1.0]]), index, 2) == [[3, 7]]


def test_knn_errors():
    index = ClassIndex.from_embeddings(np.eye(3))
    with pytest.raises(KTooLarge):
        knn_predict(l2_normalize_rows(np.eye(3)), index, 4)
    with pytest.raises(DimensionMismatch):
        knn_predict(l2_normalize_rows(np.eye(2)), index, 1)


def test_flat_hit_examples():
    preds = [[1, 2], [3, 4], [5, 6]]
    labels = [{2}, {9}, {5, 7}]
    assert flat_hit_at_k(preds, labels, 1) == pytest.approx(1 / 3)
    assert flat_hit_at_k(preds, labels, 2) == pytest.approx(2 / 3)
    with pytest.raises(EmptyLabelSet) as err:
        flat_hit_at_k(preds, [{1}, set(), {2}], 1)
    assert err.value.args


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_flat_hit_monotone_in_k(seed):
    rng = np.random.default_rng(seed)
    index = ClassIndex.from_embeddings(rng.standard_normal((6, 4)))
    imgs = l2_normalize_rows(rng.standard_normal((10, 4)))
    labels = [{int(x)} for x in rng.integers(0, 6, 10)]
    rep = zero_shot_report(imgs, index, labels, ks=(1, 2, 3, 6))
    rates = [rep.flat_hit_at[k] for k in (1, 2, 3, 6)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert rates[-1] == 1.0


def test_report_json_and_fingerprint():
    index = ClassIndex.from_embeddings(np.eye(2))
    rep = zero_shot_report(l2_normalize_rows(np.eye(2)), index, [{0}, {1}], ks=(1,), config_fingerprint=fingerprint({"a": 1}))
    assert '"1": 1.0' in rep.to_json()
    assert fingerprint({"a": 1, "b": 2}) == fingerprint({"b": 2, "a": 1})


def test_noise_stats_example():
    p = np.array([[0.8, 0.1, 0.1], [0.2, 0.6, 0.2], [0.0, 0.3, 0.7]])
    s = noise_stats(p)
    assert s.paired_mean == pytest.approx(0.7)
    assert s.unpaired_mean == pytest.approx(0.9 / 6)
    assert s.unpaired_max_mean == pytest.approx(0.6 / 3)
    with pytest.raises(NotSquare):
        noise_stats(np.ones((2, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 64), st.floats(0.5, 50.0))
def test_noise_identity(n, inv_temp):
    rng = np.random.default_rng(n)
    zv = l2_normalize_rows(rng.standard_normal((n, 5)))
    zt = l2_normalize_rows(rng.standard_normal((n, 5)))
    s = noise_stats(matching_probabilities(zv, zt, inv_temp))
    assert abs(s.paired_mean + (n - 1) * s.unpaired_mean - 1.0) < 1e-12


def test_average_noise_stats():
    a = noise_stats(np.eye(2))
    b = noise_stats(np.full((2, 2), 0.5))
    avg = average_noise_stats([a, b])
    assert avg.paired_mean == 0.75 and avg.n_batches == 2


def query(qv, qt, i=0, j=1):
    return CompositionalQuery(i, j, frozenset(qv), frozenset(qt), np.zeros(2))


def test_composition_scores_example():
    scores = compositionality_scores([query({1, 2}, {3})], [{2, 3, 9}])
    assert scores.overlap_rate == pytest.approx(2 / 3)
    assert scores.image_overlap_rate == pytest.approx(1 / 2)
    assert scores.text_overlap_rate == pytest.approx(1.0)


def test_composition_text_empty_excluded():
    scores = compositionality_scores([query({1}, set()), query({1}, {2})], [{1}, {2}])
    assert scores.n_text_empty == 1
    assert scores.text_overlap_rate == 1.0
    only_empty = compositionality_scores([query({1}, set())], [{1}])
    assert math.isnan(only_empty.text_overlap_rate)


def test_composition_empty_query():
    with pytest.raises(EmptyQuery):
        compositionality_scores([query(set(), set())], [{1}])


def samples_fixture():
    return [
        AttributeSample(np.array([1.0, 0.0]), frozenset({1, 2, 3})),
        AttributeSample(np.array([0.0, 1.0]), frozenset({2, 3, 4})),
        AttributeSample(np.array([1.0, 1.0]), frozenset({7})),
    ]


def test_query_sampling():
    qs = compositional_queries(samples_fixture(), 2, 10, seed=0)
    assert len(qs) == 10
    for q in qs:
        assert q.image_index != q.partner_index
        assert {q.image_index, q.partner_index} == {0, 1}
        assert q.text_attributes == {1, 4} - q.image_attributes
    with pytest.raises(NoEligiblePairs):
        compositional_queries(samples_fixture(), 4, 1, seed=0)


def test_query_embedding_adds_text():
    qs = compositional_queries(samples_fixture(), 2, 4, seed=1, text_embedder=lambda a: np.array([0.0, 10.0]))
    for q in qs:
        base = samples_fixture()[q.image_index].embedding
        np.testing.assert_array_equal(q.embedding, base + [0.0, 10.0])


def test_retrieval_excludes_source():
    qs = compositional_queries(samples_fixture(), 2, 4, seed=0)
    gallery = l2_normalize_rows(np.stack([s.embedding for s in samples_fixture()]))
    hits = retrieve_nearest(qs, gallery)
    assert all(h != q.image_index for h, q in zip(hits, qs))
    rnd = random_retrieval(qs, 3, seed=0)
    assert len(rnd) == 4 and all(0 <= r < 3 for r in rnd)


@pytest.mark.parametrize(
    "p, expected",
    [
        (np.eye(3), (1.0, 0.0, 0.0)),
        (np.full((4, 4), 0.25), (0.25, 0.25, 0.25)),
        (np.array([[0.9, 0.1], [0.2, 0.8]]), (0.85, 0.15, 0.15)),
    ],
)
def test_noise_stats_fixtures(p, expected):
    s = noise_stats(p)
    assert (s.paired_mean, s.unpaired_mean, s.unpaired_max_mean) == pytest.approx(expected, abs=1e-15)
    assert s.unpaired_max_mean >= s.unpaired_mean


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_knn_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    protos = rng.standard_normal((5, 3))
    imgs = l2_normalize_rows(rng.standard_normal((7, 3)))
    a = knn_predict(imgs, ClassIndex.from_embeddings(protos), 5)
    b = knn_predict(imgs, ClassIndex.from_embeddings(scale * protos), 5)
    assert a == b


@settings(max_examples=200, deadline=None)
@given(
    st.frozensets(st.integers(0, 20), min_size=1),
    st.frozensets(st.integers(0, 20)),
    st.frozensets(st.integers(0, 20)),
)
def test_overlap_counting_identity(qv, qt, r):
    qt = qt - qv
    s = compositionality_scores([query(qv, qt)], [r])
    q = qv | qt
    assert 0 <= s.overlap_rate <= 1 and 0 <= s.image_overlap_rate <= 1
    assert len(q & r) == len(qv & r) + len(qt & r)
    combined = (s.image_overlap_rate * len(qv) + (s.text_overlap_rate * len(qt) if qt else 0)) / len(q)
    assert s.overlap_rate == pytest.approx(combined, abs=1e-12)


def test_knn_exact_prototype_and_full_ranking():
    protos = np.array([[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]])
    index = ClassIndex.from_embeddings(protos)
    assert knn_predict(l2_normalize_rows(protos[[2]]), index, 1) == [[2]]
    assert knn_predict(l2_normalize_rows([[1.0, 0.1]]), index, 3) == [[0, 1, 2]]
