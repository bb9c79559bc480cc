"""Parameter containers: linear layers, layer norm, MLPs."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Parameter


class Module:
    """Minimal parameter container; subclasses set attributes and define ``__call__``."""

    def named_parameters(self, prefix=""):
        out = {}
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, T.Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def n_parameters(self):
        return int(sum(p.data.size for p in self.parameters()))

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) ^ set(state)
        if missing:
            raise KeyError(f"state mismatch on {sorted(missing)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{k}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()


class Linear(Module):
    """``x @ W + b`` with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init."""

    def __init__(self, n_in, n_out, rng, init_scale=1.0, bias=True):
        bound = init_scale / np.sqrt(n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = Parameter(rng.uniform(-bound, bound, size=(1, n_out))) if bias else None

    def __call__(self, x):
        y = T.matmul(x, self.weight)
        return y if self.bias is None else T.add(y, self.bias)


class LayerNorm(Module):
    def __init__(self, width):
        self.gain = Parameter(np.ones((1, width)))
        self.shift = Parameter(np.zeros((1, width)))

    def __call__(self, x):
        return T.add(T.mul(T.layernorm(x), self.gain), self.shift)


class MLP(Module):
    """Linear layers with GELU between them (none after the last)."""

    def __init__(self, sizes, rng, last_init_scale=1.0):
        self.layers = [
            Linear(a, b, rng, init_scale=last_init_scale if i == len(sizes) - 2 else 1.0)
            for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    def __call__(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = T.gelu(x)
        return x
