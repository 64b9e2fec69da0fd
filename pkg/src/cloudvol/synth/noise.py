"""Seeded multi-octave value noise on regular grids."""

from __future__ import annotations

import numpy as np


def _bilerp(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Bilinear upsample of a coarse grid to (h, w)."""
    gh, gw = grid.shape
    ys = np.linspace(0.0, gh - 1.0, h)
    xs = np.linspace(0.0, gw - 1.0, w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = grid[np.ix_(y0, x0)]
    b = grid[np.ix_(y0, x1)]
    c = grid[np.ix_(y1, x0)]
    d = grid[np.ix_(y1, x1)]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def fractal_noise(rng: np.random.Generator, shape, octaves: int = 5, base: int = 4,
                  persistence: float = 0.55) -> np.ndarray:
    """Sum of bilinearly upsampled Gaussian grids at doubling resolutions.

    Output is zero-mean with standard deviation close to 1, smooth at low
    octave counts and increasingly textured as octaves grow.
    """
    h, w = shape
    total = np.zeros(shape)
    norm = 0.0
    for o in range(octaves):
        res = base * (2 ** o) + 1
        amp = persistence ** o
        total += amp * _bilerp(rng.standard_normal((res, res)), h, w)
        norm += amp * amp
    return total / np.sqrt(norm)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))
