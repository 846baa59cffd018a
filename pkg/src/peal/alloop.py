"""The active-learning cycle.

Each cycle: pick samples (uniformly at random in cycle 1, by the configured
strategy afterwards, using the previous cycle's best checkpoint), reveal their
labels, train from the current weights (never re-initialized), and evaluate
on the fixed test split.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .config import ExperimentConfig
from .datasets import Annotator, Dataset
from .model import PealModel, stratified_validation_split, train_epochs
from .numerics import effective_lr
from .selection import build_feature_index, plan_for, score_pool, select

# RNG stream tags; each stream is seeded by (trial seed, tag, cycle)
_SEED_SET, _TRAIN, _VAL_SPLIT, _STRATEGY = 1, 2, 3, 4


class LoopInvariantError(AssertionError):
    pass


@dataclass
class CycleRecord:
    cycle: int
    labeled_count: int
    test_accuracy: float
    selected_wrong: int
    selected_correct: int
    effective_lr: float
    wall_time_s: float
    best_epoch: int = 0
    partial: bool = False
    pool_exhausted: bool = False

    @property
    def unknown_ratio(self) -> float:
        return unknown_ratio(self.selected_wrong, self.selected_correct)


@dataclass
class RunMetrics:
    strategy: str
    mode: str
    balanced: bool
    seed: int
    cycles: list[CycleRecord] = field(default_factory=list)
    weight_hashes: list[tuple[str, str]] = field(default_factory=list)


def unknown_ratio(wrong: int, correct: int) -> float:
    if correct == 0:
        return math.inf if wrong else 0.0
    return wrong / correct


def unknown_known_counts(predicted, oracle_labels) -> tuple[int, int]:
    """(wrong, correct) for the selection: mispredicted samples are model unknowns."""
    predicted = np.asarray(predicted)
    oracle_labels = np.asarray(oracle_labels)
    wrong = int(np.sum(predicted != oracle_labels))
    return wrong, len(predicted) - wrong


class PoolState:
    """Partition of pool ids into labeled / unlabeled, backed by the annotator."""

    def __init__(self, dataset: Dataset, budget: int):
        self.pool_ids = np.asarray(dataset.pool_ids, dtype=np.int64)
        self.annotator = Annotator(dataset, budget)
        self.labeled_ids: list[int] = []
        self.labels: list[int] = []
        self._unlabeled = set(self.pool_ids.tolist())
        self.cycle = 0

    @property
    def unlabeled_ids(self) -> np.ndarray:
        return np.array(sorted(self._unlabeled), dtype=np.int64)

    @property
    def budget_consumed(self) -> int:
        return self.annotator.consumed

    @property
    def budget_total(self) -> int:
        return self.annotator.budget

    def acquire(self, ids) -> np.ndarray:
        labels = self.annotator.annotate(ids)
        for i, y in zip(ids, labels):
            self._unlabeled.discard(int(i))
            self.labeled_ids.append(int(i))
            self.labels.append(int(y))
        return labels

    def check(self) -> None:
        lab = set(self.labeled_ids)
        if lab & self._unlabeled:
            raise LoopInvariantError("labeled and unlabeled sets overlap")
        if lab | self._unlabeled != set(self.pool_ids.tolist()):
            raise LoopInvariantError("labeled and unlabeled sets do not cover the pool")
        if len(lab) != len(self.labeled_ids):
            raise LoopInvariantError("duplicate labeled ids")


def _rng(seed: int, tag: int, cycle: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, tag, cycle])


def _params_hash(model: PealModel) -> str:
    h = hashlib.sha256()
    for name, arr in model.state_dict().items():
        h.update(name.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def build_model(config: ExperimentConfig, dataset: Dataset, seed: int) -> tuple[PealModel, np.ndarray]:
    """Model for one trial and the input array it consumes (tokens or frozen features)."""
    mode = config.model.mode
    common = dict(
        num_classes=dataset.num_classes, lora=config.lora_config(),
        head_dropout=config.model.head_dropout, seed=seed,
    )
    if dataset.kind == "tokens":
        _, t, d = dataset.samples.shape
        encoder = config.encoder_config(t, d)
        model = PealModel(mode=mode, encoder=encoder, **common)
        if mode == "adapter":
            return model, dataset.samples
        # linear probing: features of the frozen (random) encoder, computed once
        return model, model.encode_base(dataset.samples)
    if mode == "adapter":
        raise ValueError("adapter mode needs a token dataset; embeddings support frozen mode only")
    model = PealModel(mode="frozen", feature_dim=dataset.samples.shape[1], **common)
    return model, dataset.samples


def cycle_sizes(budget: int, per_cycle: int) -> list[int]:
    full, rem = divmod(budget, per_cycle)
    return [per_cycle] * full + ([rem] if rem else [])


def run_trial(
    config: ExperimentConfig,
    dataset: Dataset,
    seed: int,
    on_cycle: Callable[[CycleRecord], None] | None = None,
) -> RunMetrics:
    al = config.al
    if len(dataset.test_ids) == 0:
        raise ValueError("dataset has an empty test split")
    if al.budget > len(dataset.pool_ids):
        raise ValueError(f"budget {al.budget} exceeds pool size {len(dataset.pool_ids)}")
    model, inputs = build_model(config, dataset, seed)
    schedule = config.lr_schedule()
    state = PoolState(dataset, al.budget)
    test_x, test_y = inputs[dataset.test_ids], dataset.test_labels
    metrics = RunMetrics(al.strategy, config.model.mode, al.balanced, seed)
    sizes = cycle_sizes(al.budget, al.per_cycle)

    for cycle, size in enumerate(sizes, start=1):
        t0 = time.perf_counter()
        state.cycle = cycle
        unlabeled = state.unlabeled_ids
        exhausted = size > len(unlabeled)
        if cycle == 1:
            chosen = np.sort(_rng(seed, _SEED_SET).choice(unlabeled, size=min(size, len(unlabeled)), replace=False))
            predicted = model.predict(inputs[chosen])
        else:
            index = None
            if al.strategy == "featdist":
                lab = np.asarray(state.labeled_ids)
                index = build_feature_index(model, inputs[lab], state.labels, lab)
            scores = score_pool(al.strategy, model, inputs[unlabeled], unlabeled, index, _rng(seed, _STRATEGY, cycle))
            plan = plan_for(scores, size, dataset.num_classes, al.balanced)
            chosen = select(scores, plan)
            predicted = scores.predicted[np.searchsorted(scores.ids, chosen)]
        labels = state.acquire(chosen)
        wrong, correct = unknown_known_counts(predicted, labels)
        state.check()

        lab = np.asarray(state.labeled_ids)
        lab_y = np.asarray(state.labels)
        lr = effective_lr(schedule, cycle)
        split = stratified_validation_split(lab_y, dataset.num_classes, config.train.val_fraction, _rng(seed, _VAL_SPLIT, cycle))
        if split is None:
            tr, val_x, val_y = lab, None, None
            tr_y = lab_y
        else:
            tr_idx, val_idx = split
            tr, tr_y = lab[tr_idx], lab_y[tr_idx]
            val_x, val_y = inputs[lab[val_idx]], lab_y[val_idx]
        entering = _params_hash(model) if config.run.debug_hashes else ""
        if metrics.weight_hashes and entering != metrics.weight_hashes[-1][1]:
            raise LoopInvariantError(f"cycle {cycle} did not start from the previous best checkpoint")
        result = train_epochs(
            model, inputs[tr], tr_y, config.train.epochs, config.optimizer_config(lr),
            _rng(seed, _TRAIN, cycle), val_x, val_y,
        )
        if config.run.debug_hashes:
            metrics.weight_hashes.append((entering, _params_hash(model)))
        acc = float(np.mean(model.predict(test_x) == test_y))
        record = CycleRecord(
            cycle=cycle, labeled_count=len(lab), test_accuracy=acc, selected_wrong=wrong,
            selected_correct=correct, effective_lr=lr, wall_time_s=time.perf_counter() - t0,
            best_epoch=result.best_epoch, partial=size != al.per_cycle, pool_exhausted=exhausted,
        )
        metrics.cycles.append(record)
        if on_cycle is not None:
            on_cycle(record)
    return metrics


# experiments ------------------------------------------------------------------


@dataclass
class AggregateRow:
    cycle: int
    labeled_count: int
    acc_mean: float
    acc_std: float
    unknown_ratio_mean: float
    wrong_mean: float
    wrong_std: float
    correct_mean: float
    correct_std: float


@dataclass
class ExperimentResult:
    trials: list[RunMetrics]
    aggregate: list[AggregateRow]


def aggregate(trials: list[RunMetrics]) -> list[AggregateRow]:
    """Per-cycle mean / population std across trials, independent of trial order."""
    if not trials:
        return []
    n_cycles = min(len(t.cycles) for t in trials)
    rows = []
    for i in range(n_cycles):
        recs = sorted((t.cycles[i] for t in trials), key=lambda r: (r.test_accuracy, r.selected_wrong, r.selected_correct))
        acc = np.array([r.test_accuracy for r in recs])
        wrong = np.array([r.selected_wrong for r in recs], dtype=float)
        correct = np.array([r.selected_correct for r in recs], dtype=float)
        ratios = sorted(r.unknown_ratio for r in recs)
        rows.append(AggregateRow(
            cycle=recs[0].cycle,
            labeled_count=recs[0].labeled_count,
            acc_mean=float(np.mean(acc)),
            acc_std=float(np.std(acc)),
            unknown_ratio_mean=float(np.mean(ratios)),
            wrong_mean=float(np.mean(wrong)),
            wrong_std=float(np.std(wrong)),
            correct_mean=float(np.mean(correct)),
            correct_std=float(np.std(correct)),
        ))
    return rows


def trial_seeds(config: ExperimentConfig) -> list[int]:
    return [config.run.seed + i for i in range(config.run.trials)]


def _trial_job(args):
    config, dataset, seed = args
    return run_trial(config, dataset, seed)


def run_experiment(
    config: ExperimentConfig,
    dataset: Dataset,
    on_cycle: Callable[[int, CycleRecord], None] | None = None,
) -> ExperimentResult:
    if config.run.trials < 1:
        raise ValueError("trials must be >= 1")
    seeds = trial_seeds(config)
    if config.run.parallel and len(seeds) > 1:
        with ProcessPoolExecutor() as pool:
            trials = list(pool.map(_trial_job, [(config, dataset, s) for s in seeds]))
        if on_cycle is not None:
            for k, t in enumerate(trials):
                for rec in t.cycles:
                    on_cycle(k, rec)
    else:
        trials = []
        for k, s in enumerate(seeds):
            cb = (lambda rec, k=k: on_cycle(k, rec)) if on_cycle is not None else None
            trials.append(run_trial(config, dataset, s, cb))
    return ExperimentResult(trials, aggregate(trials))
