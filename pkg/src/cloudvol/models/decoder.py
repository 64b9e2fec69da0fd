"""Volume decoder for fine-tuning: encoder features -> per-height maps.

Patch-expanding stages undo the encoder's merges (grid side doubles, channel
width halves), a strided transposed conv returns to pixel resolution, and one
prediction head per target variable emits the 80 height levels.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..tensor import nn, ops
from ..tensor.core import Tensor
from .blocks import ResidualConvBlock
from .configs import DECODER_CHANNELS, N_LEVELS, SwinConfig
from .swin import SwinEncoder

VARIABLES = ("z", "iwc", "re")


class PatchExpand(nn.Module):
    """Double the token grid side, halve the channel width."""

    def __init__(self, dim: int, rng: np.random.Generator, dtype=None):
        self.dim = dim
        self.expand = nn.Linear(dim, 2 * dim, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        b, g, _, d = x.shape
        h = self.expand(x)                                   # (B, G, G, 2D)
        h = ops.reshape(h, (b, g, g, 2, 2, d // 2))
        h = ops.transpose(h, (0, 1, 3, 2, 4, 5))
        return ops.reshape(h, (b, 2 * g, 2 * g, d // 2))


class PredictionHead(nn.Module):
    """residual conv -> relu -> 1x1 conv to the height levels."""

    def __init__(self, rng: np.random.Generator, dtype=None):
        self.block = ResidualConvBlock(DECODER_CHANNELS, DECODER_CHANNELS,
                                       rng, dtype=dtype)
        self.out = nn.Conv2d(DECODER_CHANNELS, N_LEVELS, 1, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return self.out(ops.relu(self.block(x)))


class SwinConvModel(nn.Module):
    """Encoder plus convolutional volume decoder with V prediction heads."""

    def __init__(self, config: SwinConfig, rng: np.random.Generator,
                 variables: Tuple[str, ...] = VARIABLES, dtype=None):
        if not variables or any(v not in VARIABLES for v in variables):
            raise ValueError(f"variables must be drawn from {VARIABLES}")
        self.config = config
        self.variables = tuple(variables)
        self.encoder = SwinEncoder(config, rng, dtype=dtype)
        dt = self.encoder.dtype

        self.expands = [PatchExpand(config.dims[i], rng, dtype=dt)
                        for i in range(config.n_stages - 1, 0, -1)]
        d0 = config.dims[0]
        self.up = nn.ConvTranspose2d(d0, DECODER_CHANNELS, config.token_size,
                                     rng, stride=config.token_size, dtype=dt)
        self.fuse = ResidualConvBlock(DECODER_CHANNELS, DECODER_CHANNELS,
                                      rng, dtype=dt)
        self.heads = [PredictionHead(rng, dtype=dt) for _ in self.variables]

    @property
    def n_variables(self) -> int:
        return len(self.variables)

    @property
    def uses_metadata(self) -> bool:
        return self.config.use_metadata

    def forward(self, x: Tensor, meta: Optional[Tensor] = None) -> Tensor:
        """(B, H, W, 11) -> (B, H, W, V*80), heads concatenated in order."""
        feats = self.encoder(x, meta=meta, token_mask=None)
        h = feats[-1]
        for expand in self.expands:
            h = expand(h)
        h = ops.relu(self.fuse(self.up(h)))
        outs = [head(h) for head in self.heads]
        if len(outs) == 1:
            return outs[0]
        return ops.concat(outs, axis=3)
