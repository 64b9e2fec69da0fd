"""Shifted-window transformer encoder with token masking.

Token pipeline: pixels -> strided patch embed -> (+ positional encoding,
learned mask-token substitution, optional metadata conditioning) -> stages
of windowed attention alternating zero and half-window shifts, with patch
merging between stages.
"""

from __future__ import annotations

import math
from typing import List, Optional

import numpy as np

from ..tensor import nn, ops
from ..tensor.core import DEFAULT_DTYPE, Tensor
from .configs import SwinConfig
from .metadata import METADATA_DIM

ATTN_NEG = -1e9


def select_mask(grid_side: int, unit_side: int, ratio: float,
                rng: np.random.Generator) -> np.ndarray:
    """Boolean (grid, grid) token mask with exactly round(ratio*units) units.

    Units are unit_side x unit_side token squares sampled uniformly without
    replacement; every token of a chosen unit is masked. ratio 0 is allowed
    as the degenerate no-op.
    """
    if grid_side % unit_side:
        raise ValueError(f"grid {grid_side} not divisible by mask unit {unit_side}")
    us = grid_side // unit_side
    n_units = us * us
    n_masked = int(round(ratio * n_units))
    unit_mask = np.zeros(n_units, dtype=bool)
    if n_masked:
        unit_mask[rng.choice(n_units, size=n_masked, replace=False)] = True
    unit_mask = unit_mask.reshape(us, us)
    return np.repeat(np.repeat(unit_mask, unit_side, axis=0), unit_side, axis=1)


def mask_to_pixels(token_mask: np.ndarray, token_size: int) -> np.ndarray:
    """Token mask -> pixel mask by expanding each token to its pixel block."""
    return np.repeat(np.repeat(token_mask, token_size, axis=0), token_size, axis=1)


def _relative_index(window: int) -> np.ndarray:
    """(N, N) lookup into the (2W-1)^2 relative-position bias table."""
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window),
                                  indexing="ij")).reshape(2, -1)
    rel = coords[:, :, None] - coords[:, None, :] + window - 1
    return (rel[0] * (2 * window - 1) + rel[1]).astype(np.intp)


_MASK_CACHE = {}


def shift_attention_mask(grid: int, window: int, shift: int) -> np.ndarray:
    """(nW, N, N) additive mask hiding cross-boundary pairs after a shift."""
    key = (grid, window, shift)
    if key not in _MASK_CACHE:
        img = np.zeros((grid, grid), dtype=np.int64)
        region = 0
        cuts = (slice(0, grid - window), slice(grid - window, grid - shift),
                slice(grid - shift, grid))
        for hs in cuts:
            for ws in cuts:
                img[hs, ws] = region
                region += 1
        nh = grid // window
        win_ids = (img.reshape(nh, window, nh, window)
                   .transpose(0, 2, 1, 3).reshape(-1, window * window))
        differs = win_ids[:, :, None] != win_ids[:, None, :]
        _MASK_CACHE[key] = np.where(differs, ATTN_NEG, 0.0)
    return _MASK_CACHE[key]


class WindowAttention(nn.Module):
    """Multi-head attention inside one window, with relative position bias."""

    def __init__(self, dim: int, heads: int, window: int,
                 rng: np.random.Generator, dtype=None):
        self.dim = dim
        self.heads = heads
        self.window = window
        self.head_dim = dim // heads
        self.scale = self.head_dim ** -0.5
        self.q = nn.Linear(dim, dim, rng, dtype=dtype)
        self.k = nn.Linear(dim, dim, rng, dtype=dtype)
        self.v = nn.Linear(dim, dim, rng, dtype=dtype)
        self.proj = nn.Linear(dim, dim, rng, dtype=dtype)
        table = (2 * window - 1) ** 2
        self.rel_bias = nn.parameter(nn.trunc_normal(rng, (table, heads)),
                                     dtype=dtype or DEFAULT_DTYPE)
        self.rel_index = _relative_index(window).reshape(-1)

    def _heads_split(self, t: Tensor, bw: int, n: int) -> Tensor:
        t = ops.reshape(t, (bw, n, self.heads, self.head_dim))
        return ops.transpose(t, (0, 2, 1, 3))

    def forward(self, xw: Tensor, attn_mask: Optional[np.ndarray] = None,
                batch: int = 1) -> Tensor:
        """xw: (B*nW, N, D) window tokens; attn_mask: (nW, N, N) additive."""
        bw, n, _ = xw.shape
        q = self._heads_split(self.q(xw), bw, n) * self.scale
        k = self._heads_split(self.k(xw), bw, n)
        v = self._heads_split(self.v(xw), bw, n)
        attn = ops.matmul(q, ops.transpose(k, (0, 1, 3, 2)))  # (BW, H, N, N)

        bias = ops.embedding_lookup(self.rel_bias, self.rel_index)
        bias = ops.transpose(ops.reshape(bias, (n, n, self.heads)), (2, 0, 1))
        attn = ops.add(attn, bias)

        if attn_mask is not None:
            nw = attn_mask.shape[0]
            mask_t = Tensor(attn_mask.astype(attn.data.dtype))
            a = ops.reshape(attn, (batch, nw, self.heads, n, n))
            a = ops.transpose(a, (0, 2, 1, 3, 4))
            a = ops.add(a, mask_t)
            a = ops.transpose(a, (0, 2, 1, 3, 4))
            attn = ops.reshape(a, (bw, self.heads, n, n))

        attn = ops.softmax(attn)
        out = ops.matmul(attn, v)                              # (BW, H, N, dh)
        out = ops.transpose(out, (0, 2, 1, 3))
        out = ops.reshape(out, (bw, n, self.dim))
        return self.proj(out)


class SwinBlock(nn.Module):
    """Pre-norm windowed attention + MLP, optionally half-window shifted."""

    def __init__(self, dim: int, heads: int, window: int, shift: int,
                 rng: np.random.Generator, dtype=None):
        self.window = window
        self.shift = shift
        self.norm1 = nn.LayerNorm(dim, dtype=dtype)
        self.attn = WindowAttention(dim, heads, window, rng, dtype=dtype)
        self.norm2 = nn.LayerNorm(dim, dtype=dtype)
        self.fc1 = nn.Linear(dim, 4 * dim, rng, dtype=dtype)
        self.fc2 = nn.Linear(4 * dim, dim, rng, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        b, g, _, d = x.shape
        shift = self.shift if g > self.window else 0  # single window: no-op shift

        h = self.norm1(x)
        if shift:
            h = ops.cyclic_shift(h, shift, axes=(1, 2))
        win = ops.window_partition(h, self.window)
        n = self.window * self.window
        win = ops.reshape(win, (win.shape[0], n, d))
        mask = shift_attention_mask(g, self.window, shift) if shift else None
        win = self.attn(win, attn_mask=mask, batch=b)
        win = ops.reshape(win, (win.shape[0], self.window, self.window, d))
        h = ops.window_merge(win, self.window, (g, g))
        if shift:
            h = ops.cyclic_shift(h, -shift, axes=(1, 2))
        x = ops.add(x, h)

        m = self.fc2(ops.gelu(self.fc1(self.norm2(x))))
        return ops.add(x, m)


class PatchMerging(nn.Module):
    """2x2 token neighborhoods -> one token of twice the channel width."""

    def __init__(self, dim: int, rng: np.random.Generator, dtype=None):
        self.norm = nn.LayerNorm(4 * dim, dtype=dtype)
        self.reduce = nn.Linear(4 * dim, 2 * dim, rng, bias=False, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        b, g, _, d = x.shape
        quads = []
        for di in (0, 1):
            for dj in (0, 1):
                key = (slice(None), slice(di, g, 2), slice(dj, g, 2), slice(None))
                quads.append(ops.slice_(x, key))
        merged = ops.concat(quads, axis=3)
        return self.reduce(self.norm(merged))


class SwinEncoder(nn.Module):
    """Token embedding, masking, conditioning, and the attention stages."""

    def __init__(self, config: SwinConfig, rng: np.random.Generator, dtype=None):
        self.config = config
        dt = dtype or DEFAULT_DTYPE
        self.dtype = dt
        d0 = config.dims[0]
        g = config.grid_size

        self.patch_embed = nn.Conv2d(config.in_channels, d0, config.token_size,
                                     rng, stride=config.token_size, dtype=dt)
        self.pos_embed = nn.parameter(nn.trunc_normal(rng, (g, g, d0)), dtype=dt)
        self.mask_token = nn.parameter(nn.trunc_normal(rng, (d0,)), dtype=dt)
        self.meta_embed = None
        if config.use_metadata:
            self.meta_embed = nn.Linear(METADATA_DIM, d0, rng, dtype=dt)

        self.stages = []
        self.merges = []
        for i, depth in enumerate(config.depths):
            blocks = [SwinBlock(config.dims[i], config.heads[i],
                                config.window_tokens,
                                0 if j % 2 == 0 else config.window_tokens // 2,
                                rng, dtype=dt)
                      for j in range(depth)]
            self.stages.append(blocks)
            if i + 1 < config.n_stages:
                self.merges.append(PatchMerging(config.dims[i], rng, dtype=dt))
        self.final_norm = nn.LayerNorm(config.dims[-1], dtype=dt)

    def named_parameters(self, prefix: str = ""):
        yield from super().named_parameters(prefix)
        for i, blocks in enumerate(self.stages):
            for j, blk in enumerate(blocks):
                yield from blk.named_parameters(f"{prefix}stages.{i}.{j}.")

    def forward(self, x: Tensor, meta: Optional[Tensor] = None,
                token_mask: Optional[np.ndarray] = None) -> List[Tensor]:
        """x: (B, H, W, C) pixels; meta: (B, 13); returns per-stage features."""
        cfg = self.config
        b = x.shape[0]
        g = cfg.grid_size
        tok = self.patch_embed(x)                               # (B, G, G, D0)

        if token_mask is not None:
            m = np.broadcast_to(token_mask[:, :, None].astype(self.dtype),
                                (g, g, cfg.dims[0])).copy()
            keep = Tensor(1.0 - m)
            m = Tensor(m)
            tok = ops.add(ops.mul(tok, keep), ops.mul(self.mask_token, m))

        tok = ops.add(tok, self.pos_embed)

        if meta is not None:
            if self.meta_embed is None:
                raise ValueError("metadata passed to a model built without it")
            emb = ops.reshape(self.meta_embed(meta), (b, 1, cfg.dims[0]))
            ones = Tensor(np.ones((b, g * g, 1), dtype=self.dtype))
            tiled = ops.reshape(ops.matmul(ones, emb), (b, g, g, cfg.dims[0]))
            tok = ops.add(tok, tiled)

        features = []
        h = tok
        for i, blocks in enumerate(self.stages):
            for blk in blocks:
                h = blk(h)
            if i + 1 < cfg.n_stages:
                features.append(h)
                h = self.merges[i](h)
        h = self.final_norm(h)
        features.append(h)
        return features
