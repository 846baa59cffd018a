"""Frozen transformer encoder with LoRA adapters on the fused QKV projection,
followed by a batch-norm / dropout / linear probe head.

Two modes share this class:

* ``adapter``: token input (batch, T, d) flows through the frozen encoder with
  trainable low-rank updates on every attention layer's QKV projection.
* ``frozen``: the backbone is the identity on precomputed embeddings
  (batch, f); only the head trains (linear probing).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..numerics import (
    BatchNormStats,
    Tensor,
    batch_norm,
    concat,
    dropout,
    gelu,
    layer_norm,
    softmax,
    softmax_array,
)
from .config import MODES, EncoderConfig, LoraConfig


@dataclass(frozen=True)
class ParamCount:
    trainable: int
    total: int

    @property
    def fraction(self) -> float:
        return self.trainable / self.total if self.total else 0.0


class PealModel:
    def __init__(
        self,
        num_classes: int,
        mode: str = "adapter",
        encoder: EncoderConfig | None = None,
        lora: LoraConfig | None = None,
        feature_dim: int | None = None,
        head_dropout: float = 0.5,
        bn_momentum: float = 0.1,
        bn_eps: float = 1e-5,
        seed: int = 0,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if num_classes < 1:
            raise ValueError("num_classes must be >= 1")
        if mode == "adapter" and encoder is None:
            encoder = EncoderConfig()
        self.mode = mode
        self.encoder_config = encoder
        self.lora_config = lora or LoraConfig()
        self.num_classes = num_classes
        self.head_dropout = head_dropout
        self.seed = seed
        if encoder is not None:
            if feature_dim is not None and feature_dim != encoder.dim:
                raise ValueError("feature_dim must equal the encoder dim")
            feature_dim = encoder.dim
        if feature_dim is None or feature_dim < 1:
            raise ValueError("feature_dim is required without an encoder")
        self.feature_dim = feature_dim
        if mode == "adapter" and self.lora_config.rank > encoder.dim:
            raise ValueError(f"LoRA rank {self.lora_config.rank} exceeds dim {encoder.dim}")

        # Independent streams so the base and head are identical across modes.
        base_ss, adapter_ss, head_ss = np.random.SeedSequence(seed).spawn(3)
        self.base: dict[str, Tensor] = {}
        self.adapters: dict[str, Tensor] = {}
        self.head: dict[str, Tensor] = {}
        if encoder is not None:
            self._init_base(np.random.default_rng(base_ss))
        if mode == "adapter":
            self._init_adapters(np.random.default_rng(adapter_ss))
        self._init_head(np.random.default_rng(head_ss))
        self.bn = BatchNormStats(feature_dim, bn_momentum, bn_eps)

    # initialization --------------------------------------------------------

    def _init_base(self, rng):
        cfg = self.encoder_config
        d, h = cfg.dim, cfg.mlp_hidden

        def w(name, fan_in, shape):
            self.base[name] = Tensor(rng.normal(0.0, 1.0 / math.sqrt(fan_in), shape), name=name)

        def b(name, n, scale=0.02):
            self.base[name] = Tensor(rng.normal(0.0, scale, n), name=name)

        for i in range(cfg.num_layers):
            p = f"layer{i}."
            self.base[p + "ln1.gain"] = Tensor(np.ones(d), name=p + "ln1.gain")
            self.base[p + "ln1.bias"] = Tensor(np.zeros(d), name=p + "ln1.bias")
            w(p + "qkv.weight", d, (d, 3 * d))
            b(p + "qkv.bias", 3 * d)
            w(p + "proj.weight", d, (d, d))
            b(p + "proj.bias", d)
            self.base[p + "ln2.gain"] = Tensor(np.ones(d), name=p + "ln2.gain")
            self.base[p + "ln2.bias"] = Tensor(np.zeros(d), name=p + "ln2.bias")
            w(p + "mlp.fc1.weight", d, (d, h))
            b(p + "mlp.fc1.bias", h)
            w(p + "mlp.fc2.weight", h, (h, d))
            b(p + "mlp.fc2.bias", d)
        self.base["norm.gain"] = Tensor(np.ones(d), name="norm.gain")
        self.base["norm.bias"] = Tensor(np.zeros(d), name="norm.bias")

    def _init_adapters(self, rng):
        cfg, lc = self.encoder_config, self.lora_config
        d, r = cfg.dim, lc.rank
        # down-projection ~ N(0, 1/r); up-projection zero so training starts at the base model
        parts = [("qkv", 3 * d)] if lc.target == "fused" else [("q", d), ("k", d), ("v", d)]
        for i in range(cfg.num_layers):
            for part, out_dim in parts:
                p = f"layer{i}.lora_{part}."
                self.adapters[p + "down"] = Tensor(
                    rng.normal(0.0, 1.0 / math.sqrt(r), (r, d)), requires_grad=True, name=p + "down"
                )
                self.adapters[p + "up"] = Tensor(
                    np.zeros((out_dim, r)), requires_grad=True, name=p + "up"
                )

    def _init_head(self, rng):
        f, k = self.feature_dim, self.num_classes
        bound = 1.0 / math.sqrt(f)
        self.head["bn.gain"] = Tensor(np.ones(f), requires_grad=True, name="bn.gain")
        self.head["bn.bias"] = Tensor(np.zeros(f), requires_grad=True, name="bn.bias")
        self.head["fc.weight"] = Tensor(
            rng.uniform(-bound, bound, (k, f)), requires_grad=True, name="fc.weight"
        )
        self.head["fc.bias"] = Tensor(rng.uniform(-bound, bound, k), requires_grad=True, name="fc.bias")

    # parameter bookkeeping -------------------------------------------------

    def named_tensors(self) -> dict[str, Tensor]:
        """All parameter tensors in declaration order: base, adapters, head."""
        return {**self.base, **self.adapters, **self.head}

    def trainable_params(self) -> list[Tensor]:
        return [t for t in self.named_tensors().values() if t.requires_grad]

    def frozen_params(self) -> list[Tensor]:
        return [t for t in self.named_tensors().values() if not t.requires_grad]

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: t.data.copy() for name, t in self.named_tensors().items()}
        state["bn.running_mean"] = self.bn.running_mean.copy()
        state["bn.running_var"] = self.bn.running_var.copy()
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        tensors = self.named_tensors()
        expected = set(tensors) | {"bn.running_mean", "bn.running_var"}
        if set(state) != expected:
            raise KeyError(f"state keys differ: missing {expected - set(state)}, extra {set(state) - expected}")
        for name, t in tensors.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != t.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.shape}")
            t.data = arr.copy()
        self.bn.running_mean = np.asarray(state["bn.running_mean"], dtype=np.float64).copy()
        self.bn.running_var = np.asarray(state["bn.running_var"], dtype=np.float64).copy()

    # forward ---------------------------------------------------------------

    def _check_input(self, inputs: np.ndarray, expect_tokens: bool):
        if expect_tokens:
            cfg = self.encoder_config
            if inputs.ndim != 3:
                raise ValueError(f"token input must be (batch, T, d), got shape {inputs.shape}")
            if inputs.shape[2] != cfg.dim:
                raise ValueError(f"token dim {inputs.shape[2]} != encoder dim {cfg.dim}")
        else:
            if inputs.ndim != 2:
                raise ValueError(
                    f"frozen mode expects embeddings (batch, f), got shape {inputs.shape}"
                )
            if inputs.shape[1] != self.feature_dim:
                raise ValueError(f"embedding dim {inputs.shape[1]} != {self.feature_dim}")

    def _attention(self, h: Tensor, i: int, training: bool, rng) -> Tensor:
        cfg, lc = self.encoder_config, self.lora_config
        b_, t_, d = h.shape
        nh = cfg.num_heads
        dh = d // nh
        p = f"layer{i}."
        qkv = h @ self.base[p + "qkv.weight"] + self.base[p + "qkv.bias"]
        if self.adapters:
            hd = dropout(h, lc.dropout, rng, training)
            if lc.target == "fused":
                delta = (hd @ self.adapters[p + "lora_qkv.down"].T) @ self.adapters[p + "lora_qkv.up"].T
            else:
                delta = concat(
                    [(hd @ self.adapters[f"{p}lora_{m}.down"].T) @ self.adapters[f"{p}lora_{m}.up"].T
                     for m in "qkv"],
                    axis=-1,
                )
            qkv = qkv + delta * lc.scaling
        qkv = qkv.reshape(b_, t_, 3, nh, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        att = softmax((q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dh)))
        out = (att @ v).transpose(0, 2, 1, 3).reshape(b_, t_, d)
        return out @ self.base[p + "proj.weight"] + self.base[p + "proj.bias"]

    def _encoder(self, tokens: Tensor, training: bool, rng) -> Tensor:
        cfg = self.encoder_config
        x = tokens
        for i in range(cfg.num_layers):
            p = f"layer{i}."
            h = layer_norm(x) * self.base[p + "ln1.gain"] + self.base[p + "ln1.bias"]
            x = x + self._attention(h, i, training, rng)
            h = layer_norm(x) * self.base[p + "ln2.gain"] + self.base[p + "ln2.bias"]
            h = gelu(h @ self.base[p + "mlp.fc1.weight"] + self.base[p + "mlp.fc1.bias"])
            x = x + (h @ self.base[p + "mlp.fc2.weight"] + self.base[p + "mlp.fc2.bias"])
        x = layer_norm(x) * self.base["norm.gain"] + self.base["norm.bias"]
        if cfg.pooling == "mean":
            return x.mean(axis=1)
        return x[:, 0, :]

    def encode(self, inputs, training: bool = False, rng=None) -> Tensor:
        """Features (batch, f). Adapter mode runs the adapted encoder on tokens;
        frozen mode passes embeddings through unchanged."""
        arr = inputs.data if isinstance(inputs, Tensor) else np.asarray(inputs, dtype=np.float64)
        if self.mode == "frozen":
            self._check_input(arr, expect_tokens=False)
            return inputs if isinstance(inputs, Tensor) else Tensor(arr)
        self._check_input(arr, expect_tokens=True)
        x = inputs if isinstance(inputs, Tensor) else Tensor(arr)
        return self._encoder(x, training, rng)

    def encode_base(self, tokens) -> np.ndarray:
        """Output of the frozen encoder alone (adapters bypassed), eval mode."""
        if self.encoder_config is None:
            raise ValueError("model has no encoder")
        arr = np.asarray(tokens, dtype=np.float64)
        self._check_input(arr, expect_tokens=True)
        saved, self.adapters = self.adapters, {}
        try:
            return self._encoder(Tensor(arr), False, None).data
        finally:
            self.adapters = saved

    def head_logits(self, features: Tensor, training: bool = False, rng=None) -> Tensor:
        if features.ndim != 2 or features.shape[1] != self.feature_dim:
            raise ValueError(f"features {features.shape} do not match head input dim {self.feature_dim}")
        z = batch_norm(features, self.bn, training) * self.head["bn.gain"] + self.head["bn.bias"]
        z = dropout(z, self.head_dropout, rng, training)
        return z @ self.head["fc.weight"].T + self.head["fc.bias"]

    def forward(self, inputs, training: bool = False, rng=None) -> Tensor:
        return self.head_logits(self.encode(inputs, training, rng), training, rng)

    def classify(self, features) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode (logits, probabilities) for a feature batch."""
        logits = self.head_logits(Tensor(np.asarray(features, dtype=np.float64))).data
        return logits, softmax_array(logits)

    def infer(self, inputs, chunk: int = 512) -> tuple[np.ndarray, np.ndarray]:
        """Eval-mode (features, probabilities) over a full array, in fixed-size chunks."""
        inputs = np.asarray(inputs, dtype=np.float64)
        feats, probs = [], []
        for start in range(0, len(inputs), chunk):
            f = self.encode(inputs[start:start + chunk]).data
            feats.append(f)
            probs.append(self.classify(f)[1])
        if not feats:
            return np.zeros((0, self.feature_dim)), np.zeros((0, self.num_classes))
        return np.concatenate(feats), np.concatenate(probs)

    def predict(self, inputs) -> np.ndarray:
        return self.infer(inputs)[1].argmax(axis=1)


def trainable_param_count(model: PealModel) -> ParamCount:
    trainable = sum(t.size for t in model.trainable_params())
    total = sum(t.size for t in model.named_tensors().values())
    return ParamCount(trainable, total)


def adapter_param_closed_form(encoder: EncoderConfig, lora: LoraConfig) -> int:
    """Adapter entries across all layers.

    Fused QKV: r*d (down) + 3d*r (up) = 4dr per layer. Separate q/k/v pairs:
    3 * (r*d + d*r) = 6dr per layer.
    """
    per_layer = 4 if lora.target == "fused" else 6
    return encoder.num_layers * per_layer * encoder.dim * lora.rank


def head_param_count(feature_dim: int, num_classes: int) -> int:
    # batch-norm gain/bias + linear weight/bias
    return 2 * feature_dim + feature_dim * num_classes + num_classes
