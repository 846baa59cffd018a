from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import Tensor, _check_finite


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], beta1=0.9, beta2=0.999, epsilon=1e-8) -> AdamState:
        return cls(
            [np.zeros_like(p.data) for p in params],
            [np.zeros_like(p.data) for p in params],
            0, beta1, beta2, epsilon,
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    ``weight_decay`` is the coupled L2 form (added to the gradient).
    """
    if lr < 0:
        raise ValueError(f"learning rate must be non-negative, got {lr}")
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape or state.first_moment[i].shape != p.shape:
            raise ValueError(f"shape mismatch for parameter {i}: {p.shape} vs grad {g.shape}")
        _check_finite(g, "adam_step", "gradient")
        if weight_decay:
            g = g + weight_decay * p.data
        m = b1 * state.first_moment[i] + (1.0 - b1) * g
        v = b2 * state.second_moment[i] + (1.0 - b2) * g * g
        state.first_moment[i] = m
        state.second_moment[i] = v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return state


@dataclass(frozen=True)
class LrSchedule:
    """Step decay indexed by active-learning cycle."""

    base_lr: float = 1e-3
    gamma: float = 0.1
    drop_cycles: tuple[int, ...] = field(default=(5, 8))


def effective_lr(schedule: LrSchedule, cycle: int) -> float:
    if cycle < 1:
        raise ValueError(f"cycles are numbered from 1, got {cycle}")
    drops = sum(1 for c in schedule.drop_cycles if c <= cycle)
    return schedule.base_lr * schedule.gamma**drops
