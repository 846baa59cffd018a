"""Binary checkpoint files.

Layout (all little-endian)::

    8 bytes   magic b"PEALCKPT"
    u32       version (1)
    u32       config block length L
    L bytes   UTF-8 JSON config (model hyperparameters + tensor names in order)
    u32       tensor count
    per tensor, in declaration order:
        u32       ndim
        ndim*u64  shape
        f64 * prod(shape)  values, C order
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import EncoderConfig, LoraConfig
from .network import PealModel

MAGIC = b"PEALCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _config_block(model: PealModel, names: list[str]) -> dict:
    return {
        "mode": model.mode,
        "num_classes": model.num_classes,
        "feature_dim": model.feature_dim,
        "head_dropout": model.head_dropout,
        "bn_momentum": model.bn.momentum,
        "bn_eps": model.bn.eps,
        "seed": model.seed,
        "encoder": asdict(model.encoder_config) if model.encoder_config else None,
        "lora": asdict(model.lora_config),
        "tensors": names,
    }


def save_checkpoint(model: PealModel, path) -> None:
    state = model.state_dict()
    names = list(state)
    config = json.dumps(_config_block(model, names), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(config)), config, struct.pack("<I", len(names))]
    for name in names:
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> PealModel:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}")
    pos = 8

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    version, clen = take("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    if pos + clen > len(buf):
        raise CheckpointError(f"{path}: truncated config block")
    cfg = json.loads(buf[pos:pos + clen].decode("utf-8"))
    pos += clen
    (count,) = take("<I")
    if count != len(cfg["tensors"]):
        raise CheckpointError(f"{path}: tensor count {count} disagrees with config")
    state = {}
    for name in cfg["tensors"]:
        (ndim,) = take("<I")
        shape = take(f"<{ndim}Q")
        n = int(np.prod(shape))
        if pos + 8 * n > len(buf):
            raise CheckpointError(f"{path}: truncated tensor {name}")
        state[name] = np.frombuffer(buf, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n

    model = PealModel(
        num_classes=cfg["num_classes"],
        mode=cfg["mode"],
        encoder=EncoderConfig(**cfg["encoder"]) if cfg["encoder"] else None,
        lora=LoraConfig(**cfg["lora"]),
        feature_dim=cfg["feature_dim"],
        head_dropout=cfg["head_dropout"],
        bn_momentum=cfg["bn_momentum"],
        bn_eps=cfg["bn_eps"],
        seed=cfg["seed"],
    )
    model.load_state_dict(state)
    return model
