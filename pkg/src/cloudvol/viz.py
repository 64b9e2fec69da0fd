"""Portable-format image renders: reconstruction triptychs, curtain
comparison strips, max-column composites, and spatial grids.

Everything is written as binary PGM (P5, gray) or PPM (P6, color) so no
imaging dependency is needed. Color curtains use a fixed blue-white-red
ramp; NaN cells render black.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

GAP_PX = 2

# anchor colors of the diverging ramp, low -> high
_RAMP = np.array([[40, 60, 150], [120, 170, 220], [245, 245, 245],
                  [230, 150, 90], [170, 30, 40]], dtype=np.float64)


def write_pgm(path, gray: np.ndarray) -> Path:
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError("PGM writer expects a 2D uint8 array")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode())
        fh.write(gray.tobytes())
    return path


def write_ppm(path, rgb: np.ndarray) -> Path:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("PPM writer expects an (H, W, 3) uint8 array")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{rgb.shape[1]} {rgb.shape[0]}\n255\n".encode())
        fh.write(rgb.tobytes())
    return path


def read_pnm(path) -> np.ndarray:
    """Read back P5/P6 files written by this module."""
    raw = Path(path).read_bytes()
    magic, dims, maxval_and_rest = raw.split(b"\n", 2)
    w, h = (int(t) for t in dims.split())
    data = maxval_and_rest.split(b"\n", 1)[1]
    if magic == b"P5":
        return np.frombuffer(data, dtype=np.uint8, count=h * w).reshape(h, w)
    if magic == b"P6":
        return np.frombuffer(data, dtype=np.uint8, count=h * w * 3).reshape(h, w, 3)
    raise ValueError(f"unsupported magic {magic!r}")


def to_gray(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Scale to uint8; NaN maps to 0."""
    if hi <= lo:
        raise ValueError("empty value range")
    x = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    x = np.where(np.isnan(x), 0.0, np.clip(x, 0.0, 1.0))
    return np.round(x * 255.0).astype(np.uint8)


def to_ramp(values: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Diverging color ramp; NaN maps to black."""
    if hi <= lo:
        raise ValueError("empty value range")
    x = (np.asarray(values, dtype=np.float64) - lo) / (hi - lo)
    nan = np.isnan(x)
    x = np.where(nan, 0.0, np.clip(x, 0.0, 1.0))
    pos = x * (len(_RAMP) - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, len(_RAMP) - 1)
    frac = (pos - i0)[..., None]
    rgb = _RAMP[i0] * (1.0 - frac) + _RAMP[i1] * frac
    rgb[nan] = 0.0
    return np.round(rgb).astype(np.uint8)


def _imagery_rgb(values: np.ndarray) -> np.ndarray:
    """First three spectral channels of a normalized patch as RGB."""
    return to_gray(values[:, :, :3], -1.0, 1.0)


def triptych(original: np.ndarray, masked_pixels: np.ndarray,
             reconstruction: np.ndarray) -> np.ndarray:
    """masked input | reconstruction | original, side by side.

    All panels are (P, P, 11) normalized imagery; masked pixels show as
    mid-gray in the first panel.
    """
    left = original.copy()
    left[masked_pixels] = 0.0
    panels = [_imagery_rgb(left), _imagery_rgb(reconstruction),
              _imagery_rgb(original)]
    h = panels[0].shape[0]
    gap = np.zeros((h, GAP_PX, 3), dtype=np.uint8)
    row = []
    for i, p in enumerate(panels):
        if i:
            row.append(gap)
        row.append(p)
    return np.concatenate(row, axis=1)


def curtain_strip(pred: np.ndarray, target: np.ndarray, lo: float,
                  hi: float) -> np.ndarray:
    """Prediction over target, height on the vertical axis, top of the
    atmosphere at the top row."""
    if pred.shape != target.shape:
        raise ValueError("curtain shapes differ")
    top = to_ramp(pred.T, lo, hi)
    bottom = to_ramp(target.T, lo, hi)
    gap = np.zeros((GAP_PX, top.shape[1], 3), dtype=np.uint8)
    return np.concatenate([top, gap, bottom], axis=0)


def max_column_composite(volume: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """(P, P, 80) physical volume -> per-pixel maximum over height, colored."""
    if volume.ndim != 3:
        raise ValueError("expected a (P, P, L) volume")
    return to_ramp(volume.max(axis=2), lo, hi)


def spatial_grid_image(dense: np.ndarray) -> np.ndarray:
    """RMSE grid with NaN gaps -> gray render scaled to the occupied range."""
    finite = np.isfinite(dense)
    if not finite.any():
        return np.zeros((max(dense.shape[0], 1), max(dense.shape[1], 1)),
                        dtype=np.uint8)
    lo = float(dense[finite].min())
    hi = float(dense[finite].max())
    if hi <= lo:
        hi = lo + 1.0
    return to_gray(dense, lo, hi)
