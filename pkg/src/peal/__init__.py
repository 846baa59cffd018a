"""Parameter-efficient active learning: LoRA fine-tuning inside a pool-based
active-learning loop with entropy and class-wise feature-distance acquisition."""

__version__ = "0.1.0"
