"""Track-masked regression loss.

Ground truth exists only along the narrow instrument track, so the squared
error is averaged over {track mask true AND target valid}; everything else
contributes exactly zero. With multiple variables the per-variable means are
summed with equal weights (all variables share the [-1, 1] scale).
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..data.normalization import SENTINEL
from ..tensor import ops
from ..tensor.core import Tensor

log = logging.getLogger(__name__)

VAR_INDEX = {"z": 0, "iwc": 1, "re": 2}

# incremented whenever a loss evaluation finds no valid cells for a variable
empty_loss_count = 0


def valid_cells(targets: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """(B, P, P, V, 80) validity: on-track and not sentinel-filled."""
    return (targets != SENTINEL) & mask[:, :, :, None, None]


def masked_mse_loss(pred: Tensor, targets: np.ndarray,
                    mask: np.ndarray) -> Tensor:
    """pred (B, P, P, V*80) vs targets (B, P, P, V, 80) under mask (B, P, P).

    Returns the sum over variables of the mean squared error across that
    variable's valid cells. A variable with no valid cells contributes 0 and
    bumps the module counter.
    """
    global empty_loss_count
    b, p, _, v, levels = targets.shape
    pred = ops.reshape(pred, (b, p, p, v, levels))

    valid = valid_cells(targets, mask)
    counts = valid.sum(axis=(0, 1, 2, 4)).astype(np.float64)   # (V,)
    if (counts == 0).any():
        empty_loss_count += int((counts == 0).sum())
        log.warning("loss saw %d variable(s) with no valid cells",
                    int((counts == 0).sum()))

    dt = pred.data.dtype
    safe_targets = np.where(valid, targets, 0.0).astype(dt)
    diff = ops.add(ops.mul(pred, Tensor(valid.astype(dt))),
                   Tensor(-safe_targets))
    sq = ops.mul(diff, diff)
    per_var = ops.sum_(sq, axis=(0, 1, 2, 4))                  # (V,)
    inv = np.where(counts > 0, 1.0 / np.maximum(counts, 1.0), 0.0)
    return ops.sum_(ops.mul(per_var, Tensor(inv.astype(dt))))


def select_variables(targets: np.ndarray, variables: Sequence[str]) -> np.ndarray:
    """Restrict dense (B, P, P, 3, 80) targets to the model's variables."""
    idx = [VAR_INDEX[v] for v in variables]
    return targets[:, :, :, idx, :]
