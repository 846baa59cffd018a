from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import AdamState, adam_step, forward_backward, softmax_cross_entropy
from .network import PealModel


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-2
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_accuracy: float | None


@dataclass
class TrainResult:
    best_epoch: int
    best_state: dict[str, np.ndarray]
    history: list[EpochMetrics] = field(default_factory=list)

    @property
    def best_val_accuracy(self) -> float | None:
        if self.best_epoch < 1:
            return None
        return self.history[self.best_epoch - 1].val_accuracy


def stratified_validation_split(
    labels: np.ndarray, num_classes: int, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray] | None:
    """Hold out about ``fraction`` of each class (at least one row, leaving at
    least one for training). Returns None if any class has fewer than 2 rows."""
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=num_classes)
    if counts.min() < 2:
        return None
    val = []
    for c in range(num_classes):
        rows = np.flatnonzero(labels == c)
        n_val = min(max(1, int(np.floor(fraction * len(rows) + 0.5))), len(rows) - 1)
        val.append(rng.permutation(rows)[:n_val])
    val_idx = np.sort(np.concatenate(val))
    train_idx = np.setdiff1d(np.arange(len(labels)), val_idx)
    return train_idx, val_idx


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    size = max(1, min(batch_size, n))
    chunks = [order[i:i + size] for i in range(0, n, size)]
    # a trailing single row gives batch norm nothing to normalize with
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        last = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], last])
    return chunks


def train_epochs(
    model: PealModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    opt: OptimizerConfig,
    rng: np.random.Generator,
    val_inputs: np.ndarray | None = None,
    val_labels: np.ndarray | None = None,
) -> TrainResult:
    """Train the model's trainable set with cross-entropy.

    The model is left holding the checkpoint with the best validation accuracy
    (earliest epoch on ties), or the final epoch when no validation set is given.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(inputs) == 0:
        raise ValueError("cannot train on an empty labeled set")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    params = model.trainable_params()
    state = AdamState.for_params(params, opt.beta1, opt.beta2, opt.epsilon)
    use_val = val_inputs is not None and len(val_inputs) > 0

    history: list[EpochMetrics] = []
    best_epoch, best_acc, best_state = 0, -1.0, model.state_dict()
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in _batches(len(inputs), opt.batch_size, rng):
            xb, yb = inputs[idx], labels[idx]
            loss, grads = forward_backward(
                lambda: softmax_cross_entropy(model.forward(xb, training=True, rng=rng), yb), params
            )
            adam_step(params, grads, state, opt.lr, opt.weight_decay)
            losses.append(loss * len(idx))
        val_acc = None
        if use_val:
            val_acc = float(np.mean(model.predict(val_inputs) == val_labels))
            if val_acc > best_acc:
                best_epoch, best_acc, best_state = epoch, val_acc, model.state_dict()
        history.append(EpochMetrics(epoch, float(np.sum(losses) / len(inputs)), val_acc))

    if use_val:
        model.load_state_dict(best_state)
    else:
        best_epoch, best_state = epochs, model.state_dict()
    return TrainResult(best_epoch, best_state, history)
