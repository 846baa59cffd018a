import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peal.index import ClassIndex, UnknownClassError


def brute_force(labeled, labels, queries, classes):
    """Double loop over queries and same-class labeled rows, direct differences."""
    out = []
    for q, c in zip(queries, classes):
        best = -1.0
        for x, y in zip(labeled, labels):
            if y == c:
                best = max(best, math.sqrt(sum((a - b) ** 2 for a, b in zip(q, x))))
        out.append(math.inf if best < 0 else best)
    return np.array(out)


def test_build_partitions_by_class():
    index = ClassIndex.build(np.eye(3), [0, 0, 1], num_classes=2)
    assert index.sizes() == {0: 2, 1: 1}
    assert index.classes == [0, 1]


def test_build_empty():
    index = ClassIndex.build(np.zeros((0, 4)), [], num_classes=3)
    assert index.sizes() == {} and len(index) == 0


def test_build_conserves_count(rng):
    labels = rng.integers(0, 8, 500)
    index = ClassIndex.build(rng.normal(size=(500, 6)), labels, num_classes=8)
    assert sum(index.sizes().values()) == 500
    for c, n in index.sizes().items():
        assert n == np.sum(labels == c)


def test_build_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        ClassIndex.build(rng.normal(size=(3, 2)), [0, 1], num_classes=2)
    with pytest.raises(ValueError):
        ClassIndex.build(rng.normal(size=(2, 2)), [0, 1], num_classes=2, ids=[5, 5])
    with pytest.raises(UnknownClassError):
        ClassIndex.build(rng.normal(size=(2, 2)), [0, 3], num_classes=2)


def test_three_four_five():
    index = ClassIndex.build(np.array([[0.0, 0.0], [3.0, 4.0]]), [0, 0], num_classes=2)
    assert index.max_distance([0.0, 0.0], 0).d_max == 5.0


def test_empty_dictionary_is_infinite_and_unknown_class_errors():
    index = ClassIndex.build(np.array([[1.0, 2.0]]), [0], num_classes=3)
    assert index.max_distance([0.0, 0.0], 2).d_max == math.inf
    with pytest.raises(UnknownClassError):
        index.max_distance([0.0, 0.0], 3)
    with pytest.raises(ValueError):
        index.max_distance([0.0, 0.0, 0.0], 0)


def test_matches_brute_force(rng):
    labeled = rng.normal(size=(200, 16))
    labels = rng.integers(0, 5, 200)
    queries = rng.normal(size=(50, 16))
    classes = rng.integers(0, 5, 50)
    index = ClassIndex.build(labeled, labels, num_classes=5)
    got = index.max_distances(queries, classes)
    want = brute_force(labeled, labels, queries, classes)
    np.testing.assert_allclose(got, want, rtol=1e-9)


def test_cancellation_refined_exactly():
    rng = np.random.default_rng(2)
    offset = 1e7
    labeled = offset + rng.normal(scale=1e-3, size=(30, 8))
    queries = offset + rng.normal(scale=1e-3, size=(10, 8))
    index = ClassIndex.build(labeled, np.zeros(30, int), num_classes=1)
    got = index.max_distances(queries, np.zeros(10, int))
    want = brute_force(labeled, np.zeros(30), queries, np.zeros(10))
    np.testing.assert_allclose(got, want, rtol=1e-9)


def test_single_query_batch_equals_scalar(rng):
    index = ClassIndex.build(rng.normal(size=(40, 4)), rng.integers(0, 3, 40), num_classes=3)
    q = rng.normal(size=4)
    assert index.batch_max_distance(q[None], [1])[0].d_max == index.max_distance(q, 1).d_max


def test_permuting_queries_permutes_results(rng):
    index = ClassIndex.build(rng.normal(size=(60, 5)), rng.integers(0, 4, 60), num_classes=4)
    q, c = rng.normal(size=(30, 5)), rng.integers(0, 4, 30)
    perm = rng.permutation(30)
    np.testing.assert_array_equal(index.max_distances(q, c)[perm], index.max_distances(q[perm], c[perm]))


def test_batch_speed_and_exact_agreement_with_scalar_path(rng):
    labeled = rng.normal(size=(500, 32))
    index = ClassIndex.build(labeled, rng.integers(0, 10, 500), num_classes=10)
    q, c = rng.normal(size=(1000, 32)), rng.integers(0, 10, 1000)
    index.max_distances(q[:10], c[:10])  # warm-up
    t0 = time.perf_counter()
    batch = index.max_distances(q, c)
    elapsed = time.perf_counter() - t0
    scalar = np.array([index.max_distance(qi, ci).d_max for qi, ci in zip(q, c)])
    np.testing.assert_array_equal(batch, scalar)
    assert elapsed < 0.1


def test_results_carry_ids_and_classes(rng):
    index = ClassIndex.build(rng.normal(size=(10, 3)), rng.integers(0, 2, 10), num_classes=2)
    res = index.batch_max_distance(rng.normal(size=(2, 3)), [1, 0], sample_ids=[7, 9])
    assert [(r.sample_id, r.predicted_class) for r in res] == [(7, 1), (9, 0)]
    assert all(r.d_max >= 0 for r in res)


def test_squared_and_plain_rankings_agree(rng):
    index = ClassIndex.build(rng.normal(size=(50, 6)), rng.integers(0, 3, 50), num_classes=3)
    d = index.max_distances(rng.normal(size=(40, 6)), rng.integers(0, 3, 40))
    np.testing.assert_array_equal(np.argsort(-d, kind="stable"), np.argsort(-(d * d), kind="stable"))


@given(st.integers(0, 2**31 - 1), st.integers(0, 30), st.integers(1, 6))
@settings(max_examples=60, deadline=None)
def test_incremental_insertion_matches_rebuild(seed, n, k):
    rng = np.random.default_rng(seed)
    X, y = rng.normal(size=(n + 1, 4)), rng.integers(0, k, n + 1)
    incremental = ClassIndex.build(X[:n], y[:n], num_classes=k)
    incremental.add(X[n], int(y[n]), n)
    rebuilt = ClassIndex.build(X, y, num_classes=k)
    q, c = rng.normal(size=(8, 4)), rng.integers(0, k, 8)
    np.testing.assert_array_equal(incremental.max_distances(q, c), rebuilt.max_distances(q, c))


def test_duplicate_insertion_rejected(rng):
    index = ClassIndex.build(rng.normal(size=(3, 2)), [0, 1, 1], num_classes=2)
    with pytest.raises(ValueError):
        index.add([0.0, 0.0], 0, 2)


def test_dump_writes_embedding_file(tmp_path, rng):
    from peal.datasets import load_dataset

    X = rng.normal(size=(6, 3)).astype(np.float32).astype(np.float64)
    index = ClassIndex.build(X, [1, 0, 1, 2, 0, 1], num_classes=3)
    index.dump(tmp_path / "idx.pemb")
    ds = load_dataset(tmp_path / "idx.pemb", test_fraction=0.0)
    assert ds.kind == "embeddings" and len(ds) == 6
    np.testing.assert_array_equal(ds.samples[:2], index.dictionary(0))
