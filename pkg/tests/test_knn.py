import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nestknn.core import AtmosphericClass, WeightMatrix
from nestknn.errors import ValidationError
from nestknn.knn import (
    SearchIndex,
    brute_force_arrays,
    brute_force_knn,
    build_index,
    query_knn,
    weighted_distance,
    whiten,
)

from conftest import make_sample


def random_psd(rng, d, rank=None):
    A = rng.standard_normal((d, rank or d))
    return A @ A.T


def naive_knn(X, ids, y, k, W):
    """Plain-Python oracle: sort every (distance, id) pair."""
    W = np.asarray(W)
    pairs = sorted((float((y - x) @ W @ (y - x)), int(i)) for x, i in zip(X, ids))
    return [i for _, i in pairs[:k]]


def test_distance_examples():
    assert weighted_distance([1, 2], [1, 2], WeightMatrix([[2.0, 1.0], [1.0, 3.0]])) == 0.0
    assert weighted_distance([1, 2], [4, 6], WeightMatrix.identity(2)) == 25.0
    W = WeightMatrix.diagonal([2.0, 1.0])
    assert weighted_distance([1, 2], [4, 6], W) == 34.0
    # same value through the whitened, unweighted route
    L = whiten(W)
    z = L @ (np.array([1.0, 2.0]) - np.array([4.0, 6.0]))
    assert float(z @ z) == pytest.approx(34.0, rel=1e-15)


def test_whiten_examples(rng):
    assert np.array_equal(whiten(WeightMatrix.identity(3)), np.eye(3))
    assert np.allclose(whiten(WeightMatrix.diagonal([4.0, 9.0])), np.diag([2.0, 3.0]))
    W = random_psd(rng, 13)
    L = whiten(WeightMatrix(W))
    assert np.linalg.norm(L.T @ L - W) / np.linalg.norm(W) < 1e-9
    assert np.allclose(L, np.tril(L))


def test_whiten_singular(rng):
    W = random_psd(rng, 6, rank=3)
    L = whiten(WeightMatrix(W))
    assert np.linalg.norm(L.T @ L - W) / np.linalg.norm(W) < 1e-9


def test_single_sample_index():
    idx = build_index([make_sample(42, n=3)], WeightMatrix.identity(3))
    for y in ([0.0, 0.0, 0.0], [300.0, 60.0, 120.0]):
        assert [h.sample_id for h in query_knn(idx, y, 1)] == [42]


def test_duplicates_ordered_by_id():
    tb = [200.0, 210.0]
    stratum = [make_sample(i, tb=tb, n=2) for i in (9, 3, 5)]
    idx = build_index(stratum, WeightMatrix.identity(2))
    hits = query_knn(idx, [201.0, 211.0], 3)
    assert [h.sample_id for h in hits] == [3, 5, 9]
    assert len({h.distance for h in hits}) == 1


def test_query_equal_to_stored_vector(rng):
    X = rng.uniform(150, 300, (200, 5))
    idx = SearchIndex.from_arrays(X, np.arange(200), np.ones(200), WeightMatrix.identity(5))
    hit = query_knn(idx, X[17], 1)[0]
    assert hit.sample_id == 17 and hit.distance == 0.0


def test_k_equals_stratum(rng):
    X = rng.uniform(150, 300, (50, 4))
    ids = rng.permutation(1000)[:50]
    idx = SearchIndex.from_arrays(X, ids, np.ones(50), WeightMatrix.diagonal([1, 2, 3, 4]))
    hits = query_knn(idx, X.mean(axis=0), 50)
    assert sorted(h.sample_id for h in hits) == sorted(ids.tolist())
    d = [h.distance for h in hits]
    assert d == sorted(d)


def test_k_out_of_range(rng):
    idx = SearchIndex.from_arrays(rng.uniform(size=(5, 2)), np.arange(5), np.ones(5),
                                  WeightMatrix.identity(2))
    for k in (0, 6):
        with pytest.raises(ValidationError):
            query_knn(idx, [0.5, 0.5], k)


def test_classes_travel_with_hits(rng):
    X = rng.uniform(150, 300, (40, 3))
    classes = rng.integers(1, 5, 40)
    idx = SearchIndex.from_arrays(X, np.arange(40), classes, WeightMatrix.identity(3))
    for h in query_knn(idx, X[0], 10):
        assert h.atmospheric_class is AtmosphericClass(int(classes[h.sample_id]))


@pytest.mark.parametrize("kind", ["identity", "diag", "full"])
def test_index_matches_naive_oracle(rng, kind):
    N, d, k = 1000, 13, 30
    X = rng.uniform(150, 300, (N, d))
    ids = rng.permutation(N)
    Wm = {"identity": np.eye(d), "diag": np.diag(rng.uniform(0.1, 5, d)),
          "full": random_psd(rng, d)}[kind]
    W = WeightMatrix(Wm)
    idx = SearchIndex.from_arrays(X, ids, np.ones(N), W)
    for _ in range(100):
        y = rng.uniform(150, 300, d)
        assert [h.sample_id for h in query_knn(idx, y, k)] == naive_knn(X, ids, y, k, Wm)


def test_index_matches_brute_force_10k(rng):
    N, d = 10_000, 13
    # correlated channels, as real brightness temperatures are
    X = 220 + rng.standard_normal((N, 3)) @ rng.standard_normal((3, d)) * 10 + rng.standard_normal((N, d))
    ids = np.arange(N)
    W = WeightMatrix.diagonal(rng.uniform(0.5, 2, d))
    idx = SearchIndex.from_arrays(X, ids, np.ones(N), W)
    for _ in range(100):
        y = X[rng.integers(N)] + rng.standard_normal(d)
        assert query_knn(idx, y, 50) == brute_force_arrays(X, ids, np.ones(N), y, 50, W)


def test_brute_force_on_samples():
    stratum = [make_sample(i, tb=[200.0 + i, 200.0], n=2) for i in range(5)]
    hits = brute_force_knn(stratum, [202.2, 200.0], 2, WeightMatrix.identity(2))
    assert [h.sample_id for h in hits] == [2, 3]


def test_rerank_uses_new_weights(rng):
    X = np.array([[0.0, 1.0], [1.5, 0.0], [3.0, 3.0]]) + 200
    idx = SearchIndex.from_arrays(X, np.arange(3), np.ones(3), WeightMatrix.identity(2))
    pos, _ = idx.rerank(np.arange(3), [200.0, 200.0], WeightMatrix.diagonal([1.0, 10.0]), 2)
    assert pos.tolist() == [1, 0]


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(2, 8), st.integers(0, 2**32 - 1), st.booleans(),
       st.booleans())
def test_property_index_equals_brute(n, d, seed, full, lattice):
    rng = np.random.default_rng(seed)
    # a coarse lattice forces many exact distance ties
    X = rng.integers(0, 4, (n, d)).astype(float) if lattice else rng.standard_normal((n, d))
    W = WeightMatrix(random_psd(rng, d)) if full else WeightMatrix.diagonal(rng.uniform(0.1, 3, d))
    ids = rng.permutation(10 * n)[:n]
    idx = SearchIndex.from_arrays(X, ids, np.ones(n), W, leaf_size=int(rng.integers(1, 20)))
    k = int(rng.integers(1, n + 1))
    y = X[rng.integers(n)] if lattice else rng.standard_normal(d)
    assert query_knn(idx, y, k) == brute_force_arrays(X, ids, np.ones(n), y, k, W)
