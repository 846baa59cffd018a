from .functional import (
    BatchNormStats,
    batch_norm,
    dropout,
    gelu,
    layer_norm,
    linear,
    softmax,
    softmax_array,
    softmax_cross_entropy,
)
from .optim import AdamState, LrSchedule, adam_step, effective_lr
from .tensor import (
    GradientError,
    NonFiniteError,
    Tensor,
    as_tensor,
    backward,
    concat,
    exp,
    forward_backward,
    log,
    matmul,
)

__all__ = [
    "AdamState",
    "BatchNormStats",
    "GradientError",
    "LrSchedule",
    "NonFiniteError",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "batch_norm",
    "concat",
    "dropout",
    "effective_lr",
    "exp",
    "forward_backward",
    "gelu",
    "layer_norm",
    "linear",
    "log",
    "matmul",
    "softmax",
    "softmax_array",
    "softmax_cross_entropy",
]
