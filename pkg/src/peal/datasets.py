"""Synthetic data, binary dataset files, and the simulated annotation oracle.

File formats (little-endian)::

    embeddings  b"PEMB" u32 version=1 u64 N u32 f u32 K  N*u32 labels  N*f f32 features
    tokens      b"PTOK" u32 version=1 u64 N u32 T u32 d u32 K  N*u32 labels  N*T*d f32 tokens

Neither format stores the pool/test split; it is a deterministic stratified
function of the labels, ``test_fraction`` and ``split_seed``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EMB_MAGIC = b"PEMB"
TOK_MAGIC = b"PTOK"
FORMAT_VERSION = 1


class DatasetFormatError(ValueError):
    pass


class BadMagicError(DatasetFormatError):
    pass


class UnsupportedVersionError(DatasetFormatError):
    pass


class TruncatedFileError(DatasetFormatError):
    pass


class TrailingBytesError(DatasetFormatError):
    pass


class LabelRangeError(DatasetFormatError):
    def __init__(self, record: int, label: int, num_classes: int):
        self.record = record
        super().__init__(f"record {record}: label {label} outside [0, {num_classes})")


class NonFiniteFeatureError(DatasetFormatError):
    def __init__(self, record: int):
        self.record = record
        super().__init__(f"record {record}: non-finite feature value")


class AnnotationError(ValueError):
    pass


class BudgetExceededError(AnnotationError):
    pass


def stratified_split(labels, num_classes: int, test_fraction: float, seed: int):
    """(pool_ids, test_ids), each sorted; about ``test_fraction`` of every class goes to test."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    labels = np.asarray(labels)
    rng = np.random.default_rng([seed, 0x5EED])
    test = []
    for c in range(num_classes):
        rows = np.flatnonzero(labels == c)
        n_test = int(np.floor(test_fraction * len(rows) + 0.5))
        test.append(rng.permutation(rows)[:n_test])
    test_ids = np.sort(np.concatenate(test)) if test else np.zeros(0, dtype=np.int64)
    pool_ids = np.setdiff1d(np.arange(len(labels)), test_ids)
    return pool_ids.astype(np.int64), test_ids.astype(np.int64)


class Dataset:
    """Samples with oracle labels kept private.

    Test-split labels are public (evaluation needs them); pool labels are only
    revealed through :class:`Annotator`.
    """

    def __init__(self, samples, labels, num_classes: int, pool_ids, test_ids, provenance: str = ""):
        samples = np.asarray(samples, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if samples.ndim not in (2, 3):
            raise ValueError(f"samples must be (N, f) or (N, T, d), got {samples.shape}")
        if len(labels) != len(samples):
            raise ValueError("samples and labels differ in length")
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        bad = np.flatnonzero((labels < 0) | (labels >= num_classes))
        if bad.size:
            raise LabelRangeError(int(bad[0]), int(labels[bad[0]]), num_classes)
        nonfinite = np.flatnonzero(~np.isfinite(samples.reshape(len(samples), -1)).all(axis=1))
        if nonfinite.size:
            raise NonFiniteFeatureError(int(nonfinite[0]))
        pool_ids = np.asarray(pool_ids, dtype=np.int64)
        test_ids = np.asarray(test_ids, dtype=np.int64)
        if np.intersect1d(pool_ids, test_ids).size:
            raise ValueError("pool and test splits overlap")
        self.samples = samples
        self._labels = labels
        self.num_classes = num_classes
        self.pool_ids = pool_ids
        self.test_ids = test_ids
        self.provenance = provenance

    @property
    def kind(self) -> str:
        return "tokens" if self.samples.ndim == 3 else "embeddings"

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def test_labels(self) -> np.ndarray:
        return self._labels[self.test_ids]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.samples.shape == other.samples.shape
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self._labels, other._labels)
            and np.array_equal(self.pool_ids, other.pool_ids)
            and np.array_equal(self.test_ids, other.test_ids)
        )

    __hash__ = None

    def summary(self) -> str:
        dims = "x".join(str(s) for s in self.samples.shape[1:])
        return (
            f"{self.kind} dataset: N={len(self)} dims={dims} K={self.num_classes} "
            f"pool={len(self.pool_ids)} test={len(self.test_ids)}"
        )


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 10
    per_class: int = 250
    tokens: int = 4
    dim: int = 16
    separation: float = 3.0
    noise: float = 1.0
    imbalance: tuple[float, ...] | None = None
    seed: int = 0
    test_fraction: float = 0.2
    kind: str = "tokens"

    def class_sizes(self) -> np.ndarray:
        """Samples per class; ``imbalance`` ratios are tiled over the classes and
        scaled so the largest class gets ``per_class``."""
        if not self.imbalance:
            return np.full(self.num_classes, self.per_class)
        ratios = np.resize(np.asarray(self.imbalance, dtype=np.float64), self.num_classes)
        return np.maximum(1, np.floor(self.per_class * ratios / ratios.max() + 0.5)).astype(int)


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Gaussian class clusters; class means lie on a sphere of radius ``separation``.

    Values are rounded to float32 so that the dataset survives a save/load
    round trip bit-exactly.
    """
    if spec.num_classes < 1 or spec.per_class < 1 or spec.dim < 1 or spec.tokens < 1:
        raise ValueError("synthetic spec needs at least one class, sample, token and dim")
    if spec.separation <= 0 or spec.noise <= 0:
        raise ValueError("separation and noise must be positive")
    if spec.kind not in ("tokens", "embeddings"):
        raise ValueError(f"unknown synthetic kind {spec.kind!r}")
    if spec.imbalance is not None and any(r <= 0 for r in spec.imbalance):
        raise ValueError("imbalance ratios must be positive")
    rng = np.random.default_rng(spec.seed)
    means = rng.normal(size=(spec.num_classes, spec.dim))
    means *= spec.separation / np.linalg.norm(means, axis=1, keepdims=True)
    sizes = spec.class_sizes()
    labels = np.repeat(np.arange(spec.num_classes), sizes)
    n = len(labels)
    shape = (n, spec.tokens, spec.dim) if spec.kind == "tokens" else (n, spec.dim)
    noise = rng.normal(scale=spec.noise, size=shape)
    centre = means[labels][:, None, :] if spec.kind == "tokens" else means[labels]
    samples = centre + noise
    order = rng.permutation(n)
    samples = samples[order].astype(np.float32).astype(np.float64)
    labels = labels[order]
    pool_ids, test_ids = stratified_split(labels, spec.num_classes, spec.test_fraction, spec.seed)
    return Dataset(samples, labels, spec.num_classes, pool_ids, test_ids, provenance=f"synthetic:{spec}")


# binary files ----------------------------------------------------------------


def save_dataset(dataset: Dataset, path) -> None:
    n = len(dataset)
    labels = dataset._labels.astype("<u4")
    values = dataset.samples.astype("<f4")
    if dataset.kind == "tokens":
        _, t, d = dataset.samples.shape
        header = TOK_MAGIC + struct.pack("<IQIII", FORMAT_VERSION, n, t, d, dataset.num_classes)
    else:
        f = dataset.samples.shape[1]
        header = EMB_MAGIC + struct.pack("<IQII", FORMAT_VERSION, n, f, dataset.num_classes)
    Path(path).write_bytes(header + labels.tobytes() + values.tobytes())


def load_dataset(path, test_fraction: float = 0.2, split_seed: int = 0) -> Dataset:
    buf = Path(path).read_bytes()
    magic = buf[:4]
    if magic == TOK_MAGIC:
        fmt = "<IQIII"
    elif magic == EMB_MAGIC:
        fmt = "<IQII"
    else:
        raise BadMagicError(f"{path}: unrecognized magic {magic!r}")
    hsize = 4 + struct.calcsize(fmt)
    if len(buf) < hsize:
        raise TruncatedFileError(f"{path}: header needs {hsize} bytes, file has {len(buf)}")
    fields = struct.unpack_from(fmt, buf, 4)
    version, n = fields[0], fields[1]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version}")
    if magic == TOK_MAGIC:
        _, _, t, d, k = fields
        shape = (n, t, d)
    else:
        _, _, f, k = fields
        shape = (n, f)
    count = int(np.prod(shape))
    expected = hsize + 4 * n + 4 * count
    if len(buf) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, found {len(buf)}")
    if len(buf) > expected:
        raise TrailingBytesError(f"{path}: {len(buf) - expected} unexpected trailing bytes")
    labels = np.frombuffer(buf, dtype="<u4", count=n, offset=hsize).astype(np.int64)
    values = np.frombuffer(buf, dtype="<f4", count=count, offset=hsize + 4 * n).astype(np.float64)
    bad = np.flatnonzero(labels >= k)
    if bad.size:
        raise LabelRangeError(int(bad[0]), int(labels[bad[0]]), k)
    values = values.reshape(shape)
    pool_ids, test_ids = stratified_split(labels, k, test_fraction, split_seed)
    return Dataset(values, labels, k, pool_ids, test_ids, provenance=f"file:{path}")


def export_csv(dataset: Dataset, path) -> None:
    """One row per sample: id, split, label, flattened feature columns."""
    flat = dataset.samples.reshape(len(dataset), -1)
    split = np.full(len(dataset), "", dtype=object)
    split[dataset.pool_ids] = "pool"
    split[dataset.test_ids] = "test"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "split", "label"] + [f"x{j}" for j in range(flat.shape[1])])
        for i in range(len(dataset)):
            writer.writerow([i, split[i], int(dataset._labels[i])] + [repr(float(v)) for v in flat[i]])


# annotation -----------------------------------------------------------------


class Annotator:
    """Simulated oracle: reveals pool labels on request and keeps the budget ledger."""

    def __init__(self, dataset: Dataset, budget: int | None = None):
        self._dataset = dataset
        self._pool = set(dataset.pool_ids.tolist())
        self._test = set(dataset.test_ids.tolist())
        self.budget = budget
        self.consumed = 0
        self.labeled: dict[int, int] = {}

    def annotate(self, ids) -> np.ndarray:
        ids = [int(i) for i in ids]
        if len(set(ids)) != len(ids):
            raise AnnotationError("duplicate ids in one annotation request")
        for i in ids:
            if i in self._test:
                raise AnnotationError(f"id {i} belongs to the test split")
            if i not in self._pool:
                raise AnnotationError(f"id {i} is not in the pool")
            if i in self.labeled:
                raise AnnotationError(f"id {i} is already labeled")
        if self.budget is not None and self.consumed + len(ids) > self.budget:
            raise BudgetExceededError(
                f"request for {len(ids)} labels exceeds remaining budget {self.budget - self.consumed}"
            )
        labels = self._dataset._labels[ids] if ids else np.zeros(0, dtype=np.int64)
        for i, y in zip(ids, labels):
            self.labeled[i] = int(y)
        self.consumed += len(ids)
        return np.asarray(labels, dtype=np.int64)


def annotate(annotator: Annotator, ids) -> np.ndarray:
    return annotator.annotate(ids)
