"""Minimal module system: parameter discovery by attribute walk, plus the
handful of layers the models are assembled from."""

from __future__ import annotations

from typing import Dict, Iterator, Optional, Tuple

import numpy as np

from . import ops
from .core import DEFAULT_DTYPE, Tensor


# ---------------------------------------------------------------------------
# initializers
# ---------------------------------------------------------------------------

def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) resampled into [-2*std, 2*std]."""
    x = rng.normal(0.0, std, size=shape)
    bad = np.abs(x) > 2.0 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > 2.0 * std
    return x


def he_normal(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=True)


# ---------------------------------------------------------------------------
# module base
# ---------------------------------------------------------------------------

class Module:
    """Containers register parameters implicitly through attributes. Tensor
    attributes with requires_grad are parameters; Module attributes and
    lists/tuples of Modules recurse."""

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{name}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True):
        own = dict(self.named_parameters())
        missing = [k for k in own if k not in state]
        if strict and missing:
            raise KeyError(f"state dict missing parameters: {missing[:5]}{'...' if len(missing) > 5 else ''}")
        for name, p in own.items():
            if name not in state:
                continue
            arr = state[name]
            if tuple(arr.shape) != p.shape:
                raise ValueError(f"parameter '{name}' shape {p.shape} != stored {tuple(arr.shape)}")
            p.data[...] = arr.astype(p.data.dtype, copy=False)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Linear(Module):

    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 bias: bool = True, dtype=None, std: float = 0.02):
        dtype = dtype or DEFAULT_DTYPE
        self.weight = parameter(trunc_normal(rng, (d_in, d_out), std), dtype)
        self.bias = parameter(np.zeros(d_out), dtype) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        if self.bias is not None:
            y = ops.add(y, self.bias)
        return y


class LayerNorm(Module):

    def __init__(self, d: int, dtype=None, eps: float = 1e-5):
        dtype = dtype or DEFAULT_DTYPE
        self.gamma = parameter(np.ones(d), dtype)
        self.beta = parameter(np.zeros(d), dtype)
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class Conv2d(Module):
    """NHWC convolution, weight (k, k, Cin, Cout), He-initialized."""

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True, dtype=None):
        dtype = dtype or DEFAULT_DTYPE
        self.weight = parameter(he_normal(rng, (k, k, c_in, c_out), k * k * c_in), dtype)
        self.bias = parameter(np.zeros(c_out), dtype) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvTranspose2d(Module):

    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int = 0, bias: bool = True, dtype=None):
        dtype = dtype or DEFAULT_DTYPE
        self.weight = parameter(he_normal(rng, (k, k, c_in, c_out), k * k * c_in), dtype)
        self.bias = parameter(np.zeros(c_out), dtype) if bias else None
        self.stride = stride
        self.padding = padding

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)
