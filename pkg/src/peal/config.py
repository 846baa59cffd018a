"""Experiment configuration.

Config files are flat UTF-8 ``section.key = value`` lines; ``#`` starts a
comment. Unknown sections or keys are rejected with the offending line number.
Tuples are comma-separated; ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .datasets import SyntheticSpec
from .model import EncoderConfig, LoraConfig, OptimizerConfig
from .numerics import LrSchedule
from .selection import STRATEGIES


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        where = ""
        if source or line:
            where = f"{source or '<config>'}:{line}: " if line else f"{source}: "
        super().__init__(where + message)


@dataclass
class DatasetSection:
    path: str | None = None
    test_fraction: float = 0.2
    split_seed: int = 0
    kind: str = "tokens"
    classes: int = 10
    per_class: int = 250
    tokens: int = 4
    dim: int = 16
    separation: float = 3.0
    noise: float = 1.0
    imbalance: tuple[float, ...] | None = None
    seed: int = 0

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            num_classes=self.classes, per_class=self.per_class, tokens=self.tokens, dim=self.dim,
            separation=self.separation, noise=self.noise, imbalance=self.imbalance,
            seed=self.seed, test_fraction=self.test_fraction, kind=self.kind,
        )


@dataclass
class ModelSection:
    mode: str = "adapter"
    layers: int = 2
    heads: int = 2
    mlp_hidden: int = 64
    pooling: str = "mean"
    head_dropout: float = 0.5


@dataclass
class LoraSection:
    rank: int = 16
    alpha: float = 16.0
    dropout: float = 0.1
    target: str = "fused"


@dataclass
class TrainSection:
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-2
    epochs: int = 50
    val_fraction: float = 0.15
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass
class ScheduleSection:
    gamma: float = 0.1
    drop_cycles: tuple[int, ...] = (5, 8)


@dataclass
class AlSection:
    budget: int = 500
    per_cycle: int = 50
    strategy: str = "random"
    balanced: bool = True


@dataclass
class RunSection:
    trials: int = 3
    seed: int = 0
    output: str = "runs/experiment"
    parallel: bool = False
    record_wall_time: bool = False
    debug_hashes: bool = False


@dataclass
class ExperimentConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    model: ModelSection = field(default_factory=ModelSection)
    lora: LoraSection = field(default_factory=LoraSection)
    train: TrainSection = field(default_factory=TrainSection)
    schedule: ScheduleSection = field(default_factory=ScheduleSection)
    al: AlSection = field(default_factory=AlSection)
    run: RunSection = field(default_factory=RunSection)

    # derived views -------------------------------------------------------

    def lora_config(self) -> LoraConfig:
        return LoraConfig(self.lora.rank, self.lora.alpha, self.lora.dropout, self.lora.target)

    def encoder_config(self, tokens: int, dim: int) -> EncoderConfig:
        return EncoderConfig(
            num_layers=self.model.layers, dim=dim, num_heads=self.model.heads, tokens=tokens,
            mlp_hidden=self.model.mlp_hidden, pooling=self.model.pooling,
        )

    def optimizer_config(self, lr: float) -> OptimizerConfig:
        t = self.train
        return OptimizerConfig(lr, t.weight_decay, t.batch_size, t.beta1, t.beta2, t.epsilon)

    def lr_schedule(self) -> LrSchedule:
        return LrSchedule(self.train.lr, self.schedule.gamma, tuple(self.schedule.drop_cycles))

    # validation / serialization -------------------------------------------

    def validate(self) -> ExperimentConfig:
        if self.al.strategy not in STRATEGIES:
            raise ConfigError(f"al.strategy must be one of {sorted(STRATEGIES)}, got {self.al.strategy!r}")
        if self.model.mode not in ("adapter", "frozen"):
            raise ConfigError(f"model.mode must be 'adapter' or 'frozen', got {self.model.mode!r}")
        if self.dataset.kind not in ("tokens", "embeddings"):
            raise ConfigError(f"dataset.kind must be 'tokens' or 'embeddings'")
        for key, value in [
            ("al.budget", self.al.budget), ("al.per_cycle", self.al.per_cycle),
            ("train.epochs", self.train.epochs), ("train.batch_size", self.train.batch_size),
            ("run.trials", self.run.trials),
        ]:
            if value < 1:
                raise ConfigError(f"{key} must be >= 1")
        if self.train.lr < 0 or self.train.weight_decay < 0:
            raise ConfigError("learning rate and weight decay must be non-negative")
        try:
            self.lora_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def to_text(self) -> str:
        lines = []
        for section in fields(self):
            obj = getattr(self, section.name)
            for f in fields(obj):
                lines.append(f"{section.name}.{f.name} = {_format(getattr(obj, f.name))}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def copy(self) -> ExperimentConfig:
        return parse_config(self.to_text())


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def _coerce(raw: str, annotation):
    hints = typing.get_args(annotation)
    origin = typing.get_origin(annotation)
    if origin is typing.Union or (hints and type(None) in hints):
        if raw.lower() in ("none", ""):
            return None
        inner = [h for h in hints if h is not type(None)][0]
        return _coerce(raw, inner)
    if origin is tuple:
        elem = hints[0]
        return tuple(_coerce(part.strip(), elem) for part in raw.split(",") if part.strip())
    if annotation is bool:
        low = raw.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if annotation is int:
        return int(raw)
    if annotation is float:
        return float(raw)
    return raw


def _resolved_hints(cls):
    return typing.get_type_hints(cls)


def apply_setting(config: ExperimentConfig, key: str, raw: str, line: int | None = None, source=None):
    parts = key.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(f"key {key!r} must look like section.name", line, source)
    section_name, name = parts
    section = getattr(config, section_name, None)
    if section is None or not dataclasses.is_dataclass(section):
        raise ConfigError(f"unknown section {section_name!r}", line, source)
    hints = _resolved_hints(type(section))
    if name not in hints:
        raise ConfigError(f"unknown key {key!r}", line, source)
    try:
        setattr(section, name, _coerce(raw.strip(), hints[name]))
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}", line, source) from None


def parse_config(text: str, source: str | None = None, overrides=()) -> ExperimentConfig:
    config = ExperimentConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw_line.strip()!r}", lineno, source)
        key, value = line.split("=", 1)
        apply_setting(config, key, value, lineno, source)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must be key=value")
        key, value = item.split("=", 1)
        apply_setting(config, key, value)
    return config.validate()


def load_config(path, overrides=()) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", source=str(path)) from None
    return parse_config(text, str(path), overrides)
