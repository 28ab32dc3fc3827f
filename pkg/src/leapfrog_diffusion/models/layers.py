"""Parameter-owning building blocks shared by the encoders and heads."""

from __future__ import annotations

import numpy as np

from ..data.rng import Generator
from ..numerics import Parameter, ParameterStore, Tensor, as_tensor, matmul, relu


class Module:
    """Names its parameters ``<prefix>.<local>`` inside a shared store.

    With an ``rng`` missing parameters are created with uniform
    ``+-1/sqrt(fan_in)`` values; without one they must already exist (e.g.
    loaded from a checkpoint).
    """

    def __init__(self, store: ParameterStore, prefix: str, rng: Generator | None = None):
        self.store = store
        self.prefix = prefix
        self.rng = rng

    def param(self, local: str, shape: tuple, fan_in: int) -> Parameter:
        name = f"{self.prefix}.{local}"
        if name in self.store:
            p = self.store[name]
            if p.shape != tuple(shape):
                raise ValueError(f"parameter {name} has shape {p.shape}, expected {tuple(shape)}")
            return p
        if self.rng is None:
            raise KeyError(f"parameter {name} missing from the store")
        bound = 1.0 / np.sqrt(fan_in)
        value = self.rng.spawn(name).uniform(-bound, bound, tuple(shape))
        return self.store.add(name, np.asarray(value).reshape(shape))


class Linear(Module):
    def __init__(self, store, prefix, d_in: int, d_out: int, rng=None, bias: bool = True):
        super().__init__(store, prefix, rng)
        self.w = self.param("w", (d_in, d_out), d_in)
        self.b = self.param("b", (d_out,), d_in) if bias else None

    def __call__(self, x) -> Tensor:
        out = matmul(as_tensor(x), self.w)
        return out if self.b is None else out + self.b


class MLP(Module):
    """Linear layers with ReLU between them and a linear output."""

    def __init__(self, store, prefix, sizes: list[int], rng=None):
        super().__init__(store, prefix, rng)
        self.layers = [
            Linear(store, f"{prefix}.l{i}", a, b, rng) for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]))
        ]

    @property
    def last(self) -> Linear:
        return self.layers[-1]

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = relu(h)
        return h
