from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import EncoderConfig, LoraConfig
from .network import (
    ParamCount,
    PealModel,
    adapter_param_closed_form,
    head_param_count,
    trainable_param_count,
)
from .training import (
    EpochMetrics,
    OptimizerConfig,
    TrainResult,
    stratified_validation_split,
    train_epochs,
)

__all__ = [
    "CheckpointError",
    "EncoderConfig",
    "EpochMetrics",
    "LoraConfig",
    "OptimizerConfig",
    "ParamCount",
    "PealModel",
    "TrainResult",
    "adapter_param_closed_form",
    "head_param_count",
    "load_checkpoint",
    "save_checkpoint",
    "stratified_validation_split",
    "train_epochs",
    "trainable_param_count",
]
