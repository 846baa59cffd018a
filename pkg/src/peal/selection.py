"""Acquisition strategies and budget allocation.

Every strategy maps the current model's view of the unlabeled pool to one
score per sample (higher = more worth annotating). ``select`` then takes the
top of the ranking, either globally or per predicted class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .index import ClassIndex
from .model import PealModel

PROB_FLOOR = 1e-12


def entropy(p) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError("entropy expects a single probability vector")
    return float(entropies(p[None, :])[0])


def entropies(probs) -> np.ndarray:
    """Row-wise entropy of a (N, K) probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    if (probs < 0).any():
        raise ValueError("probabilities must be non-negative")
    sums = probs.sum(axis=-1)
    if np.abs(sums - 1.0).max(initial=0.0) > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")
    terms = np.where(probs > 0, probs * np.log(np.maximum(probs, PROB_FLOOR)), 0.0)
    return -terms.sum(axis=-1)


@dataclass
class SelectionScores:
    ids: np.ndarray
    scores: np.ndarray
    predicted: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class PoolView:
    """What a strategy may look at: model outputs on the unlabeled pool."""

    ids: np.ndarray
    features: np.ndarray
    probs: np.ndarray
    index: ClassIndex | None
    rng: np.random.Generator | None

    @property
    def predicted(self) -> np.ndarray:
        return self.probs.argmax(axis=1)


def _random_scores(view: PoolView) -> np.ndarray:
    if view.rng is None:
        raise ValueError("random strategy needs a random generator")
    return view.rng.random(len(view.ids))


def _entropy_scores(view: PoolView) -> np.ndarray:
    return entropies(view.probs)


def _featdist_scores(view: PoolView) -> np.ndarray:
    if view.index is None:
        raise ValueError("featdist strategy needs a class index of labeled features")
    return view.index.max_distances(view.features, view.predicted)


STRATEGIES: dict[str, Callable[[PoolView], np.ndarray]] = {
    "random": _random_scores,
    "entropy": _entropy_scores,
    "featdist": _featdist_scores,
}


def register_strategy(name: str, fn: Callable[[PoolView], np.ndarray]) -> None:
    STRATEGIES[name] = fn


def build_feature_index(model: PealModel, inputs, labels, ids) -> ClassIndex:
    """Index the current model's features of the labeled set."""
    features, _ = model.infer(inputs)
    return ClassIndex.build(features, labels, model.num_classes, ids=ids)


def score_pool(
    strategy: str,
    model: PealModel,
    pool_inputs,
    pool_ids,
    index: ClassIndex | None = None,
    rng: np.random.Generator | None = None,
) -> SelectionScores:
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {sorted(STRATEGIES)}")
    pool_ids = np.asarray(pool_ids, dtype=np.int64)
    if len(pool_ids) == 0:
        raise ValueError("cannot score an empty pool")
    features, probs = model.infer(pool_inputs)
    view = PoolView(pool_ids, features, probs, index, rng)
    scores = np.asarray(STRATEGIES[strategy](view), dtype=np.float64)
    return SelectionScores(pool_ids, scores, view.predicted)


# budgeting -------------------------------------------------------------------


@dataclass(frozen=True)
class BudgetPlan:
    budget: int
    num_classes: int
    targets: tuple[int, ...]
    mode: str  # "balanced" | "agnostic"

    @property
    def total(self) -> int:
        return sum(self.targets) if self.mode == "balanced" else self.budget


def allocate_budget(budget: int, num_classes: int, candidates) -> BudgetPlan:
    """Class-balanced per-class targets.

    Each class gets floor(B/K); the remainder goes one apiece to the lowest
    class ids. Classes short of candidates are capped, and their shortfall is
    dealt round-robin in ascending class order to classes with spare
    candidates.
    """
    if budget < 1 or num_classes < 1:
        raise ValueError("budget and class count must be >= 1")
    cand = np.asarray(candidates, dtype=np.int64)
    if cand.shape != (num_classes,):
        raise ValueError(f"need one candidate count per class, got {cand.shape}")
    base, rem = divmod(budget, num_classes)
    wanted = np.full(num_classes, base)
    wanted[:rem] += 1
    targets = np.minimum(wanted, cand)
    shortfall = int(wanted.sum() - targets.sum())
    while shortfall > 0:
        spare = np.flatnonzero(targets < cand)
        if spare.size == 0:
            break
        for c in spare[:shortfall]:
            targets[c] += 1
        shortfall -= min(shortfall, spare.size)
    return BudgetPlan(budget, num_classes, tuple(int(t) for t in targets), "balanced")


def agnostic_plan(budget: int, num_classes: int) -> BudgetPlan:
    return BudgetPlan(budget, num_classes, (0,) * num_classes, "agnostic")


def plan_for(scores: SelectionScores, budget: int, num_classes: int, balanced: bool) -> BudgetPlan:
    if not balanced:
        return agnostic_plan(budget, num_classes)
    counts = np.bincount(scores.predicted, minlength=num_classes)
    return allocate_budget(budget, num_classes, counts)


def _ranked(ids: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Positions sorted by descending score, ascending id on ties."""
    return np.lexsort((ids, -scores))


def select(scores: SelectionScores, plan: BudgetPlan) -> np.ndarray:
    """Selected sample ids (ascending). Takes the whole pool if the budget exceeds it."""
    if len(scores) == 0:
        raise ValueError("nothing to select from")
    if plan.mode == "agnostic":
        order = _ranked(scores.ids, scores.scores)
        return np.sort(scores.ids[order[: plan.budget]])
    chosen = []
    for c, n_c in enumerate(plan.targets):
        if n_c == 0:
            continue
        members = np.flatnonzero(scores.predicted == c)
        order = _ranked(scores.ids[members], scores.scores[members])
        chosen.append(scores.ids[members[order[:n_c]]])
    return np.sort(np.concatenate(chosen)) if chosen else np.zeros(0, dtype=np.int64)
