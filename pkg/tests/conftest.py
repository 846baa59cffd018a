import numpy as np
import pytest

from peal.model import EncoderConfig, LoraConfig, PealModel


def central_difference(fn, arrays, h=1e-5):
    """Numerical gradient of scalar ``fn()`` w.r.t. each array in ``arrays`` (perturbed in place)."""
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn()
            flat[i] = orig - h
            down = fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest elementwise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor), initial=0.0))


def tiny_model(mode="adapter", seed=0, target="fused", **kw):
    enc = EncoderConfig(num_layers=2, dim=8, num_heads=2, tokens=4, mlp_hidden=16)
    return PealModel(num_classes=3, mode=mode, encoder=enc, lora=LoraConfig(rank=2, alpha=2.0, target=target), seed=seed, **kw)


def perturb_adapters(model, rng, scale=0.3):
    """Give the zero-initialized up-projections non-trivial values."""
    for name, t in model.adapters.items():
        if name.endswith("up"):
            t.data = rng.normal(scale=scale, size=t.shape)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
