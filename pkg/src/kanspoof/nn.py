"""Parameter containers and the few standard layers the model needs."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import DimensionError
from .tensor import Tensor


class Module:
    """Base class that discovers parameters from instance attributes.

    Tensors with ``requires_grad`` and nested modules (including lists of
    modules) are collected in attribute insertion order, which gives every
    parameter a stable dotted name.
    """

    training = True

    def named_parameters(self, prefix=""):
        seen = set()
        for name, value in vars(self).items():
            yield from _walk(value, prefix + name, seen)

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        unexpected = set(state) - set(params)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(unexpected)}")
        for name, p in params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise DimensionError(f"{name}: expected shape {p.shape}, got {value.shape}")
            p.data[...] = value

    def num_parameters(self):
        return sum(p.size for p in self.parameters())

    def train(self, mode=True):
        for module in self.modules():
            module.training = mode
        return self

    def eval(self):
        return self.train(False)

    def modules(self):
        yield self
        for value in vars(self).values():
            children = value if isinstance(value, (list, tuple)) else [value]
            for child in children:
                if isinstance(child, Module):
                    yield from child.modules()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def _walk(value, name, seen):
    if isinstance(value, Tensor):
        if value.requires_grad and id(value) not in seen:
            seen.add(id(value))
            yield name, value
    elif isinstance(value, Module):
        for child, p in value.named_parameters(name + "."):
            if id(p) not in seen:
                seen.add(id(p))
                yield child, p
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{name}.{i}", seen)


class Linear(Module):
    """Affine map ``x @ weight + bias`` on the last axis."""

    def __init__(self, d_in, d_out, rng, bias=True):
        bound = 1.0 / np.sqrt(d_in)
        self.d_in, self.d_out = d_in, d_out
        self.weight = Tensor(rng.uniform(-bound, bound, size=(d_in, d_out)), requires_grad=True)
        self.bias = Tensor(rng.uniform(-bound, bound, size=d_out), requires_grad=True) if bias else None

    def forward(self, x):
        if x.shape[-1] != self.d_in:
            raise DimensionError(f"Linear expects width {self.d_in}, got input shape {x.shape}")
        out = T.matmul(x, self.weight)
        if self.bias is not None:
            out = out + self.bias
        return out


class LayerNorm(Module):
    def __init__(self, width, eps=1e-5):
        self.eps = eps
        self.gamma = Tensor(np.ones(width), requires_grad=True)
        self.beta = Tensor(np.zeros(width), requires_grad=True)

    def forward(self, x):
        return T.layer_norm(x, self.eps) * self.gamma + self.beta
