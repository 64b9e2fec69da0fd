"""Model configurations and their named presets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

N_LEVELS = 80
DECODER_CHANNELS = 96  # volume depth the conv decoder rebuilds before heads


@dataclass(frozen=True)
class SwinConfig:
    """Shifted-window masked-autoencoder geometry.

    Sizes are in pixels unless suffixed _tokens. The token grid must divide
    evenly by both the attention window and the mask unit, and every patch
    merge must leave a grid the window still tiles.
    """
    image_size: int = 256
    in_channels: int = 11
    token_size: int = 2
    window_tokens: int = 16
    mask_unit_tokens: int = 2
    mask_ratio: float = 0.5
    depths: Tuple[int, ...] = (2, 2, 6, 2)
    dims: Tuple[int, ...] = (96, 192, 384, 768)
    heads: Tuple[int, ...] = (3, 6, 12, 24)
    use_metadata: bool = True

    def __post_init__(self):
        if self.image_size % self.token_size:
            raise ValueError("image side must divide by the token size")
        g = self.grid_size
        if g % self.mask_unit_tokens:
            raise ValueError("token grid must divide by the mask unit")
        if not (len(self.depths) == len(self.dims) == len(self.heads)):
            raise ValueError("depths, dims and heads must have equal length")
        for i in range(len(self.dims)):
            if self.dims[i] % self.heads[i]:
                raise ValueError(f"stage {i}: dim {self.dims[i]} not divisible by heads")
            if i and self.dims[i] != 2 * self.dims[i - 1]:
                raise ValueError("patch merging doubles dims stage to stage")
            side = g >> i
            if side % self.window_tokens:
                raise ValueError(f"stage {i}: grid {side} not tiled by window "
                                 f"{self.window_tokens}")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError("mask ratio must lie strictly inside (0, 1)")

    @property
    def grid_size(self) -> int:
        return self.image_size // self.token_size

    @property
    def n_stages(self) -> int:
        return len(self.depths)

    @property
    def n_mask_units(self) -> int:
        side = self.grid_size // self.mask_unit_tokens
        return side * side

    @property
    def final_grid(self) -> int:
        return self.grid_size >> (self.n_stages - 1)


def full_swin_config(use_metadata: bool = True) -> SwinConfig:
    """Production geometry: 256 px inputs, 4 stages."""
    return SwinConfig(use_metadata=use_metadata)


def desk_swin_config(use_metadata: bool = True) -> SwinConfig:
    """Small twin for tests and laptop runs: 64 px inputs, 2 stages.

    Same invariants as the full model, runtimes of seconds.
    """
    return SwinConfig(image_size=64, depths=(2, 2), dims=(32, 64),
                      heads=(2, 4), use_metadata=use_metadata)


@dataclass(frozen=True)
class UNetConfig:
    """Residual U-Net baseline: 4 stride-2 descents from 32 channels."""
    in_channels: int = 11
    channels: Tuple[int, ...] = (32, 64, 96, 128, 128)
    n_variables: int = 3
    levels: int = N_LEVELS

    def __post_init__(self):
        if len(self.channels) < 2:
            raise ValueError("need at least one down block")
        if self.channels[0] != 32:
            raise ValueError("initial convolution width is fixed at 32")
        if self.n_variables not in (1, 3):
            raise ValueError("output heads cover 1 or 3 variables")

    @property
    def depth(self) -> int:
        return len(self.channels) - 1

    @property
    def out_channels(self) -> int:
        return self.n_variables * self.levels
