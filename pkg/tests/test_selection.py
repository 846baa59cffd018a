import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from peal.index import ClassIndex
from peal.model import PealModel
from peal.selection import (
    STRATEGIES,
    SelectionScores,
    agnostic_plan,
    allocate_budget,
    entropies,
    entropy,
    plan_for,
    register_strategy,
    score_pool,
    select,
)


def mp_entropy(p):
    mpmath.mp.dps = 50
    return float(-mpmath.fsum(mpmath.mpf(x) * mpmath.log(mpmath.mpf(x)) for x in p if x > 0))


# entropy -------------------------------------------------------------------------


def test_entropy_examples():
    assert entropy([0.25] * 4) == pytest.approx(math.log(4), abs=1e-15)
    assert entropy([1.0, 0.0, 0.0]) == 0.0
    assert abs(entropy([0.7, 0.2, 0.1]) - mp_entropy([0.7, 0.2, 0.1])) < 1e-15
    assert round(entropy([0.7, 0.2, 0.1]), 6) == 0.801819


def test_entropy_rejects_invalid():
    with pytest.raises(ValueError):
        entropy([1.2, -0.2])
    with pytest.raises(ValueError):
        entropy([0.5, 0.4])


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda v: sum(v) > 1e-3))
@settings(max_examples=300, deadline=None)
def test_entropy_bounds(raw):
    p = np.array(raw) / np.sum(raw)
    h = entropy(p)
    assert -1e-12 <= h <= math.log(len(p)) + 1e-12
    assert abs(h - mp_entropy(p)) < 1e-9


def test_entropy_rows(rng):
    p = rng.dirichlet(np.ones(5), size=20)
    np.testing.assert_array_equal(entropies(p), [entropy(row) for row in p])


# allocation ------------------------------------------------------------------------


def test_allocation_examples():
    assert allocate_budget(50, 10, [100] * 10).targets == (5,) * 10
    plan = allocate_budget(50, 8, [100] * 8)
    assert plan.targets == (7, 7, 6, 6, 6, 6, 6, 6) and plan.total == 50
    plan = allocate_budget(9, 3, [1, 10, 10])
    assert plan.targets == (1, 4, 4) and plan.total == 9


def test_allocation_degenerate():
    assert allocate_budget(3, 5, [10] * 5).targets == (1, 1, 1, 0, 0)
    assert allocate_budget(10, 2, [2, 3]).targets == (2, 3)
    with pytest.raises(ValueError):
        allocate_budget(0, 3, [1, 1, 1])


@given(st.integers(1, 200), st.lists(st.integers(0, 60), min_size=1, max_size=12))
@settings(max_examples=300, deadline=None)
def test_allocation_conserves_budget(budget, cand):
    plan = allocate_budget(budget, len(cand), cand)
    assert plan.total == min(budget, sum(cand))
    assert all(0 <= t <= c for t, c in zip(plan.targets, cand))


# select ----------------------------------------------------------------------------


def _scores(values, predicted=None, ids=None):
    values = np.asarray(values, dtype=float)
    ids = np.arange(len(values)) if ids is None else np.asarray(ids)
    predicted = np.zeros(len(values), int) if predicted is None else np.asarray(predicted)
    return SelectionScores(ids, values, predicted)


def test_select_examples():
    assert select(_scores([0.1, 0.9, 0.5]), agnostic_plan(2, 1)).tolist() == [1, 2]
    assert select(_scores([0.3] * 6), agnostic_plan(3, 1)).tolist() == [0, 1, 2]


def test_select_takes_whole_pool_when_budget_exceeds_it():
    assert select(_scores([0.2, 0.1]), agnostic_plan(5, 1)).tolist() == [0, 1]
    with pytest.raises(ValueError):
        select(_scores([]), agnostic_plan(5, 1))


def _per_class_oracle(ids, scores, predicted, targets):
    picked = []
    for c, n in enumerate(targets):
        members = sorted(
            ((s, i) for i, s, p in zip(ids, scores, predicted) if p == c),
            key=lambda t: (-t[0], t[1]),
        )
        picked += [i for _, i in members[:n]]
    return sorted(picked)


def test_balanced_select_matches_exhaustive_oracle(rng):
    ids = rng.permutation(1000)[:200]
    scores = np.round(rng.random(200), 2)  # coarse values force ties
    predicted = rng.integers(0, 6, 200)
    s = SelectionScores(ids, scores, predicted)
    plan = plan_for(s, 50, 6, balanced=True)
    got = select(s, plan)
    assert got.tolist() == _per_class_oracle(ids, scores, predicted, plan.targets)
    assert len(got) == 50
    np.testing.assert_array_equal(np.bincount(predicted[np.isin(ids, got)], minlength=6), plan.targets)


def test_scale_free_ranking(rng):
    s = _scores(rng.random(100) * 10, rng.integers(0, 4, 100))
    for plan in (agnostic_plan(20, 4), plan_for(s, 20, 4, True)):
        scaled = SelectionScores(s.ids, s.scores * 37.5, s.predicted)
        np.testing.assert_array_equal(select(s, plan), select(scaled, plan))


def test_infinite_scores_ranked_first_then_by_id():
    s = _scores([1.0, np.inf, 2.0, np.inf])
    assert select(s, agnostic_plan(3, 1)).tolist() == [1, 2, 3]


# score_pool --------------------------------------------------------------------------


def _zero_head_model(k=4, f=6):
    model = PealModel(num_classes=k, mode="frozen", feature_dim=f)
    model.head["fc.weight"].data[:] = 0
    model.head["fc.bias"].data[:] = 0
    return model


def test_entropy_of_zero_head_is_ln_k(rng):
    s = score_pool("entropy", _zero_head_model(), rng.normal(size=(10, 6)), np.arange(10))
    np.testing.assert_allclose(s.scores, math.log(4), rtol=1e-14)


def test_featdist_with_empty_dictionaries_is_infinite(rng):
    index = ClassIndex(4, 6)
    s = score_pool("featdist", _zero_head_model(), rng.normal(size=(10, 6)), np.arange(10), index=index)
    assert np.isinf(s.scores).all()


def test_random_scores_follow_seeded_stream(rng):
    s = score_pool("random", _zero_head_model(), rng.normal(size=(7, 6)), np.arange(7), rng=np.random.default_rng(42))
    np.testing.assert_array_equal(s.scores, np.random.default_rng(42).random(7))


def test_score_pool_errors(rng):
    with pytest.raises(ValueError):
        score_pool("entropy", _zero_head_model(), np.zeros((0, 6)), [])
    with pytest.raises(ValueError):
        score_pool("margin", _zero_head_model(), rng.normal(size=(3, 6)), np.arange(3))


def test_plugged_in_strategy_uses_same_interface(rng):
    register_strategy("negid", lambda view: -view.ids.astype(float))
    try:
        s = score_pool("negid", _zero_head_model(), rng.normal(size=(5, 6)), np.arange(10, 15))
        assert select(s, agnostic_plan(2, 4)).tolist() == [10, 11]
    finally:
        del STRATEGIES["negid"]
