"""Footprint-to-pixel colocation and fine-tuning sample assembly.

Track footprints are snapped to their nearest imager pixel (plain Euclidean
distance in lat/lon degrees; fine on the synthetic equirectangular grid, and
the single place a haversine metric would slot in for real geostationary
grids). Multiple footprints landing on one pixel are averaged per variable
and height level, skipping sentinel-coded missing cells.
"""

from __future__ import annotations

import datetime
import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .data.normalization import SENTINEL
from .data.structures import ProfileCurtain, Sample, SpectralPatch
from .metrics import column_cloudy

log = logging.getLogger(__name__)

CLOUDY_FRACTION_MIN = 0.25


def assign_split(timestamp: float) -> str:
    """Temporal split from UTC day-of-month.

    Days 2-22 train, 24-26 val, 28-31 test; days 1, 23 and 27 are excluded
    outright so no split touches a day adjacent to another split.
    """
    day = datetime.datetime.fromtimestamp(int(timestamp), tz=datetime.timezone.utc).day
    if 2 <= day <= 22:
        return "train"
    if 24 <= day <= 26:
        return "val"
    if 28 <= day <= 31:
        return "test"
    return "excluded"


@dataclass
class ColocatedTrack:
    """Per-pixel track targets in along-track first-visit order."""
    rows: np.ndarray        # (T,) pixel row indices
    cols: np.ndarray        # (T,) pixel col indices
    targets: np.ndarray     # (T, 3, 80) normalized, variable order z/iwc/re
    types: np.ndarray       # (T,) per-pixel cloud type
    n_skipped: int = 0      # footprints outside the grid

    def __len__(self):
        return len(self.rows)


def _vote(types: np.ndarray) -> int:
    """Majority cloud type; ties go to the type of the latest footprint."""
    counts = np.bincount(types)
    top = counts.max()
    tied = set(np.flatnonzero(counts == top).tolist())
    for t in types[::-1]:
        if int(t) in tied:
            return int(t)
    return int(types[-1])


def colocate(curtain: ProfileCurtain, lat_grid: np.ndarray,
             lon_grid: np.ndarray) -> ColocatedTrack:
    """Snap each footprint to its nearest pixel and merge duplicates.

    The grid is separable (one latitude per row, one longitude per column),
    so the nearest pixel under Euclidean lat/lon distance is the pair of
    independent 1-D nearest matches. Footprints beyond half a pixel outside
    the grid edge are counted and skipped, never an error.
    """
    lat_grid = np.asarray(lat_grid, dtype=np.float64)
    lon_grid = np.asarray(lon_grid, dtype=np.float64)
    stacked = curtain.stacked()

    rows = np.abs(curtain.lat[:, None] - lat_grid[None, :]).argmin(axis=1)
    cols = np.abs(curtain.lon[:, None] - lon_grid[None, :]).argmin(axis=1)
    dlat = 0.5 * _grid_step(lat_grid)
    dlon = 0.5 * _grid_step(lon_grid)
    inside = ((np.abs(curtain.lat - lat_grid[rows]) <= dlat + 1e-12)
              & (np.abs(curtain.lon - lon_grid[cols]) <= dlon + 1e-12))
    n_skipped = int((~inside).sum())
    if n_skipped:
        log.info("colocate: skipped %d footprints outside the grid", n_skipped)

    out_rows, out_cols, out_targets, out_types = [], [], [], []
    groups = {}
    order = []
    for idx in np.flatnonzero(inside):
        key = (int(rows[idx]), int(cols[idx]))
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(int(idx))

    for key in order:
        members = groups[key]
        block = stacked[members]                       # (m, 3, 80)
        valid = block != SENTINEL
        n = valid.sum(axis=0)
        summed = np.where(valid, block, 0.0).sum(axis=0)
        merged = np.where(n > 0, summed / np.maximum(n, 1), SENTINEL)
        out_rows.append(key[0])
        out_cols.append(key[1])
        out_targets.append(merged)
        out_types.append(_vote(curtain.cloud_type[members]))

    return ColocatedTrack(
        rows=np.asarray(out_rows, dtype=np.intp),
        cols=np.asarray(out_cols, dtype=np.intp),
        targets=np.asarray(out_targets, dtype=np.float32).reshape(-1, 3, 80),
        types=np.asarray(out_types, dtype=np.uint8),
        n_skipped=n_skipped,
    )


def _grid_step(grid: np.ndarray) -> float:
    if len(grid) < 2:
        return np.inf
    return float(np.abs(np.diff(grid)).max())


def track_midpoint(track: ColocatedTrack) -> Tuple[int, int]:
    """The middle pixel of the along-track sequence."""
    mid = len(track) // 2
    return int(track.rows[mid]), int(track.cols[mid])


def extract_patch(imagery_norm: np.ndarray, scene, track: ColocatedTrack,
                  center: Tuple[int, int], side: int, sample_id: str,
                  kind: str = "general") -> Sample:
    """Cut a side x side window around center and paint track targets into it.

    The window must fit inside the image; track pixels falling outside the
    window are dropped, but at least one must remain.
    """
    h, w = imagery_norm.shape[:2]
    r0 = center[0] - side // 2
    c0 = center[1] - side // 2
    if r0 < 0 or c0 < 0 or r0 + side > h or c0 + side > w:
        raise ValueError(f"{side}x{side} window at {center} leaves the {h}x{w} image")

    rr = track.rows - r0
    cc = track.cols - c0
    keep = (rr >= 0) & (rr < side) & (cc >= 0) & (cc < side)
    if not keep.any():
        raise ValueError("no track pixels inside the requested window")

    patch = SpectralPatch(
        values=np.ascontiguousarray(imagery_norm[r0:r0 + side, c0:c0 + side]),
        lat=np.ascontiguousarray(scene.lat[r0:r0 + side]),
        lon=np.ascontiguousarray(scene.lon[c0:c0 + side]),
        timestamp=scene.timestamp,
        solar_zenith=scene.solar_zenith, solar_azimuth=scene.solar_azimuth,
        sat_zenith=scene.sat_zenith, sat_azimuth=scene.sat_azimuth,
        satellite_id="SYNTH",
    )
    return Sample(
        sample_id=sample_id,
        patch=patch,
        track_rows=rr[keep].astype(np.intp),
        track_cols=cc[keep].astype(np.intp),
        targets=track.targets[keep],
        column_types=track.types[keep],
        split=assign_split(scene.timestamp),
        kind=kind,
    )


def clamp_center(center: Tuple[int, int], side: int, h: int, w: int) -> Tuple[int, int]:
    """Nudge a window center so the window fits inside an h x w image."""
    half = side // 2
    r = min(max(center[0], half), h - (side - half))
    c = min(max(center[1], half), w - (side - half))
    return int(r), int(c)


def cloudy_fraction(sample: Sample) -> float:
    """Fraction of track columns with any level at or above the cloud cutoff."""
    z_norm = sample.targets[:, 0, :]
    return float(column_cloudy(z_norm, normalized=True).mean())


def cloudy_fraction_filter(sample: Sample, threshold: float = CLOUDY_FRACTION_MIN) -> bool:
    """Keep a sample iff its cloudy-column fraction reaches the threshold."""
    return cloudy_fraction(sample) >= threshold
