"""Residual U-Net baseline mapping spectral images to height volumes."""

from __future__ import annotations

from typing import Tuple

import numpy as np

from ..tensor import nn, ops
from ..tensor.core import Tensor
from .blocks import ResidualConvBlock
from .configs import UNetConfig
from .decoder import VARIABLES


class UNet(nn.Module):
    """Strided-conv downs, transposed-conv ups with skip concatenation."""

    uses_metadata = False

    def __init__(self, config: UNetConfig, rng: np.random.Generator,
                 variables: Tuple[str, ...] = VARIABLES, dtype=None):
        if len(variables) != config.n_variables:
            raise ValueError(
                f"{len(variables)} variable names for n_variables={config.n_variables}")
        if any(v not in VARIABLES for v in variables):
            raise ValueError(f"variables must be drawn from {VARIABLES}")
        self.config = config
        self.variables = tuple(variables)
        ch = config.channels

        self.stem = ResidualConvBlock(config.in_channels, ch[0], rng, dtype=dtype)
        self.downs = []
        for c_in, c_out in zip(ch[:-1], ch[1:]):
            self.downs.append([
                nn.Conv2d(c_in, c_out, 3, rng, stride=2, padding=1, dtype=dtype),
                ResidualConvBlock(c_out, c_out, rng, dtype=dtype),
            ])
        self.ups = []
        for c_in, c_out in zip(ch[:0:-1], ch[-2::-1]):
            self.ups.append([
                nn.ConvTranspose2d(c_in, c_out, 2, rng, stride=2, dtype=dtype),
                ResidualConvBlock(2 * c_out, c_out, rng, dtype=dtype),
            ])
        self.head = nn.Conv2d(ch[0], config.out_channels, 1, rng, dtype=dtype)

    def named_parameters(self, prefix: str = ""):
        yield from super().named_parameters(prefix)
        for name, stages in (("downs", self.downs), ("ups", self.ups)):
            for i, mods in enumerate(stages):
                for j, mod in enumerate(mods):
                    yield from mod.named_parameters(f"{prefix}{name}.{i}.{j}.")

    def forward(self, x: Tensor) -> Tensor:
        """(B, H, W, 11) -> (B, H, W, V*80)."""
        h = ops.relu(self.stem(x))
        skips = []
        for conv, block in self.downs:
            skips.append(h)
            h = ops.relu(block(conv(h)))
        for (up, block), skip in zip(self.ups, reversed(skips)):
            h = up(h)
            h = ops.concat([h, skip], axis=3)
            h = ops.relu(block(h))
        return self.head(h)
