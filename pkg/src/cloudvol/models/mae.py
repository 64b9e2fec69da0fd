"""Masked-autoencoding pre-training head over the windowed encoder.

The decoder is deliberately light: one linear projection from the final
token width back to the pixels each final token covers, then a pixel
shuffle. Reconstruction loss is charged on masked pixels only.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from ..tensor import nn, ops
from ..tensor.core import Tensor
from .configs import SwinConfig
from .swin import SwinEncoder, mask_to_pixels, select_mask


class SwinMAE(nn.Module):
    def __init__(self, config: SwinConfig, rng: np.random.Generator, dtype=None):
        self.config = config
        self.encoder = SwinEncoder(config, rng, dtype=dtype)
        self.dtype = self.encoder.dtype
        # pixels spanned by one token of the final stage
        self.final_patch = config.token_size * (2 ** (config.n_stages - 1))
        out_dim = self.final_patch ** 2 * config.in_channels
        self.head = nn.Linear(config.dims[-1], out_dim, rng, dtype=self.dtype)

    @property
    def uses_metadata(self) -> bool:
        return self.config.use_metadata

    def sample_mask(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.config
        return select_mask(cfg.grid_size, cfg.mask_unit_tokens,
                           cfg.mask_ratio, rng)

    def reconstruct(self, x: Tensor, meta: Optional[Tensor],
                    token_mask: Optional[np.ndarray]) -> Tensor:
        """(B, H, W, C) input -> (B, H, W, C) reconstruction."""
        cfg = self.config
        feats = self.encoder(x, meta=meta, token_mask=token_mask)
        h = self.head(feats[-1])                    # (B, Gf, Gf, p*p*C)
        b, gf = h.shape[0], h.shape[1]
        p, c = self.final_patch, cfg.in_channels
        h = ops.reshape(h, (b, gf, gf, p, p, c))
        h = ops.transpose(h, (0, 1, 3, 2, 4, 5))
        return ops.reshape(h, (b, gf * p, gf * p, c))

    def loss(self, x: Tensor, meta: Optional[Tensor],
             token_mask: np.ndarray) -> Tuple[Tensor, Tensor]:
        """Masked-pixel MSE. Returns (loss, reconstruction)."""
        cfg = self.config
        recon = self.reconstruct(x, meta, token_mask)
        pixel_mask = mask_to_pixels(token_mask, cfg.token_size)
        n_masked = int(pixel_mask.sum())
        if n_masked == 0:
            return Tensor(np.asarray(0.0, dtype=self.dtype)), recon
        b = x.shape[0]
        m = np.broadcast_to(pixel_mask[:, :, None].astype(self.dtype),
                            pixel_mask.shape + (cfg.in_channels,)).copy()
        diff = recon - x
        sq = ops.mul(diff, diff)
        total = ops.sum_(ops.mul(sq, Tensor(m)))
        return total * (1.0 / (n_masked * cfg.in_channels * b)), recon

    def step_loss(self, x: Tensor, meta: Optional[Tensor],
                  rng: np.random.Generator) -> Tensor:
        """One training objective evaluation with a freshly sampled mask."""
        return self.loss(x, meta, self.sample_mask(rng))[0]
