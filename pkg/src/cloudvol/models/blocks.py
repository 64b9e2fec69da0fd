"""Convolutional building blocks shared by the U-Net and the conv decoder."""

from __future__ import annotations

import numpy as np

from ..tensor import nn, ops
from ..tensor.core import Tensor


class ResidualConvBlock(nn.Module):
    """Two 3x3 convs with a skip path; no trailing activation.

    Callers place the ReLU so the block composes the same way in down
    blocks, up blocks, and prediction heads. A 1x1 projection aligns the
    skip when the channel count changes.
    """

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, dtype=None):
        self.conv1 = nn.Conv2d(c_in, c_out, 3, rng, padding=1, dtype=dtype)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, rng, padding=1, dtype=dtype)
        self.proj = None
        if c_in != c_out:
            self.proj = nn.Conv2d(c_in, c_out, 1, rng, bias=False, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv2(ops.relu(self.conv1(x)))
        skip = x if self.proj is None else self.proj(x)
        return ops.add(h, skip)
