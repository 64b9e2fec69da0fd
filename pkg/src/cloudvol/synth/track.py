"""Narrow profiling tracks across a scene and the curtains they measure."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..data.normalization import NORMALIZATION, normalize
from ..data.structures import ProfileCurtain, column_cloud_type
from .scene import Scene

FOOTPRINT_SECONDS = 0.16  # along-track sampling cadence


@dataclass(frozen=True)
class TrackSpec:
    entry: Tuple[float, float]   # (row, col), may be fractional
    exit: Tuple[float, float]
    interval_px: float = 1.0


def sample_track(scene: Scene, track: TrackSpec) -> ProfileCurtain:
    """Columns of the scene volume under the track, as a normalized curtain.

    Footprints land on nearest pixels; consecutive footprints may repeat a
    pixel (slow crossing), which downstream colocation averages out.
    """
    h, w = scene.shape
    r0, c0 = track.entry
    r1, c1 = track.exit
    dist = float(np.hypot(r1 - r0, c1 - c0))
    if dist < track.interval_px:
        raise ValueError("track has zero length at the requested interval")
    n = int(np.floor(dist / track.interval_px)) + 1
    t = np.linspace(0.0, 1.0, n)
    rows = np.rint(r0 + t * (r1 - r0)).astype(np.intp)
    cols = np.rint(c0 + t * (c1 - c0)).astype(np.intp)
    if rows.min() < 0 or rows.max() >= h or cols.min() < 0 or cols.max() >= w:
        raise ValueError("track leaves the scene bounds")

    z = normalize(scene.z[rows, cols], NORMALIZATION["z"])
    iwc = normalize(scene.iwc[rows, cols], NORMALIZATION["iwc"])
    re = normalize(scene.re[rows, cols], NORMALIZATION["re"])
    types = np.array([column_cloud_type(scene.cloud_class[r, c])
                      for r, c in zip(rows, cols)], dtype=np.uint8)
    times = scene.timestamp + FOOTPRINT_SECONDS * np.arange(n)

    return ProfileCurtain(
        lat=scene.lat[rows].copy(), lon=scene.lon[cols].copy(), time=times,
        z=z.astype(np.float32), iwc=iwc.astype(np.float32), re=re.astype(np.float32),
        cloud_type=types,
    )


def random_edge_track(rng: np.random.Generator, size: int, margin: int = 2) -> TrackSpec:
    """A near-diagonal crossing between two opposite scene edges."""
    lo, hi = margin, size - 1 - margin
    if rng.random() < 0.5:  # top -> bottom
        entry = (float(lo), float(rng.uniform(lo, hi)))
        exit_ = (float(hi), float(rng.uniform(lo, hi)))
    else:                   # left -> right
        entry = (float(rng.uniform(lo, hi)), float(lo))
        exit_ = (float(rng.uniform(lo, hi)), float(hi))
    return TrackSpec(entry=entry, exit=exit_)
