from __future__ import annotations

from dataclasses import dataclass

POOLINGS = ("mean", "first-token")
LORA_TARGETS = ("fused", "separate")
MODES = ("adapter", "frozen")


@dataclass(frozen=True)
class EncoderConfig:
    num_layers: int = 2
    dim: int = 16
    num_heads: int = 2
    tokens: int = 4
    mlp_hidden: int = 64
    pooling: str = "mean"

    def __post_init__(self):
        for name in ("num_layers", "dim", "num_heads", "tokens", "mlp_hidden"):
            if getattr(self, name) < 1:
                raise ValueError(f"encoder {name} must be >= 1")
        if self.dim % self.num_heads:
            raise ValueError(f"dim {self.dim} is not divisible by num_heads {self.num_heads}")
        if self.pooling not in POOLINGS:
            raise ValueError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")


@dataclass(frozen=True)
class LoraConfig:
    rank: int = 16
    alpha: float = 16.0
    dropout: float = 0.1
    target: str = "fused"

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("LoRA rank must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("LoRA dropout must lie in [0, 1)")
        if self.target not in LORA_TARGETS:
            raise ValueError(f"LoRA target must be one of {LORA_TARGETS}")

    @property
    def scaling(self) -> float:
        return self.alpha / self.rank
