"""Exact class-partitioned L2 index for max-distance queries.

Labeled features are grouped by class into flat dictionaries. A query with a
predicted class is compared against that class's dictionary only, and the
largest Euclidean distance is returned. Queries against a class that has no
labeled rows return ``inf``.

Distances are ranked with the expansion ``|a|^2 + |b|^2 - 2 a.b``. Every
dictionary row whose expanded distance lies within the expansion's rounding
bound of the row maximum is then recomputed directly (correctly rounded sum
of squared differences), so the reported value does not depend on how
queries were batched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_EPS = np.finfo(np.float64).eps


class UnknownClassError(KeyError):
    pass


@dataclass(frozen=True)
class DistanceResult:
    sample_id: int | None
    predicted_class: int
    d_max: float


def _exact_sq(q: np.ndarray, x: np.ndarray) -> float:
    diff = q - x
    return math.fsum((diff * diff).tolist())


class ClassIndex:
    def __init__(self, num_classes: int, dim: int | None = None):
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        self.num_classes = num_classes
        self.dim = dim
        self._features: dict[int, np.ndarray] = {}
        self._ids: dict[int, np.ndarray] = {}

    @classmethod
    def build(cls, features, labels, num_classes: int, ids=None) -> ClassIndex:
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.size == 0 and labels.size == 0:
            dim = features.shape[1] if features.ndim == 2 else None
            return cls(num_classes, dim)
        if features.ndim != 2:
            raise ValueError(f"features must be (N, f), got shape {features.shape}")
        if len(labels) != len(features):
            raise ValueError("features and labels differ in length")
        ids = np.arange(len(features)) if ids is None else np.asarray(ids, dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate sample ids")
        index = cls(num_classes, features.shape[1])
        index._check_classes(labels)
        for c in np.unique(labels):
            rows = labels == c
            index._features[int(c)] = np.ascontiguousarray(features[rows])
            index._ids[int(c)] = ids[rows]
        return index

    def _check_classes(self, classes: np.ndarray):
        if classes.size and (classes.min() < 0 or classes.max() >= self.num_classes):
            bad = classes[(classes < 0) | (classes >= self.num_classes)][0]
            raise UnknownClassError(f"class id {int(bad)} outside [0, {self.num_classes})")

    def _check_dim(self, f: int):
        if self.dim is None:
            self.dim = f
        elif f != self.dim:
            raise ValueError(f"feature dim {f} does not match index dim {self.dim}")

    def add(self, feature, label: int, sample_id: int) -> None:
        """Insert one labeled row."""
        feature = np.asarray(feature, dtype=np.float64).reshape(-1)
        self._check_dim(feature.size)
        self._check_classes(np.array([label]))
        if any(sample_id in ids for ids in self._ids.values()):
            raise ValueError(f"sample id {sample_id} already indexed")
        c = int(label)
        if c in self._features:
            self._features[c] = np.vstack([self._features[c], feature])
            self._ids[c] = np.append(self._ids[c], sample_id)
        else:
            self._features[c] = feature[None, :].copy()
            self._ids[c] = np.array([sample_id])

    @property
    def classes(self) -> list[int]:
        return sorted(self._features)

    def sizes(self) -> dict[int, int]:
        return {c: len(self._features[c]) for c in self.classes}

    def __len__(self) -> int:
        return sum(len(v) for v in self._features.values())

    def dictionary(self, c: int) -> np.ndarray:
        self._check_classes(np.array([c]))
        if c not in self._features:
            return np.zeros((0, self.dim or 0))
        return self._features[c]

    def ids(self, c: int) -> np.ndarray:
        return self._ids.get(c, np.zeros(0, dtype=np.int64))

    def max_distances(self, features, classes) -> np.ndarray:
        """Vectorized d_max for M queries; ``inf`` where the class dictionary is empty."""
        features = np.asarray(features, dtype=np.float64)
        classes = np.asarray(classes, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError(f"queries must be (M, f), got shape {features.shape}")
        if len(classes) != len(features):
            raise ValueError("queries and predicted classes differ in length")
        if len(features):
            self._check_dim(features.shape[1])
        self._check_classes(classes)
        out = np.full(len(features), np.inf)
        f = features.shape[1]
        for c in np.unique(classes):
            X = self._features.get(int(c))
            if X is None:
                continue
            rows = np.flatnonzero(classes == c)
            Q = features[rows]
            qq = np.einsum("ij,ij->i", Q, Q)
            xx = np.einsum("ij,ij->i", X, X)
            d2 = qq[:, None] + xx[None, :] - 2.0 * (Q @ X.T)
            best = d2.max(axis=1)
            slack = 8.0 * (f + 2) * _EPS * (qq + xx.max()) + 1e-300
            for r, q, row, top, s in zip(rows, Q, d2, best, slack):
                cand = np.flatnonzero(row >= top - 2.0 * s)
                out[r] = math.sqrt(max(_exact_sq(q, X[j]) for j in cand))
        return out

    def batch_max_distance(self, features, classes, sample_ids=None) -> list[DistanceResult]:
        d = self.max_distances(features, classes)
        classes = np.asarray(classes, dtype=np.int64)
        if sample_ids is None:
            sample_ids = [None] * len(d)
        return [
            DistanceResult(None if s is None else int(s), int(c), float(v))
            for s, c, v in zip(sample_ids, classes, d)
        ]

    def max_distance(self, feature, predicted_class: int, sample_id=None) -> DistanceResult:
        feature = np.asarray(feature, dtype=np.float64).reshape(1, -1)
        ids = None if sample_id is None else [sample_id]
        return self.batch_max_distance(feature, [predicted_class], ids)[0]

    def dump(self, path) -> None:
        """Write the per-class dictionaries as an embeddings file (debugging aid)."""
        from .datasets import Dataset, save_dataset

        feats = [self._features[c] for c in self.classes]
        labels = [np.full(len(self._features[c]), c) for c in self.classes]
        X = np.concatenate(feats) if feats else np.zeros((0, self.dim or 0))
        y = np.concatenate(labels) if labels else np.zeros(0, dtype=np.int64)
        ds = Dataset(X, y, self.num_classes, pool_ids=np.arange(len(y)), test_ids=np.zeros(0, dtype=np.int64))
        save_dataset(ds, path)
