"""Shared pipeline data structures: imagery patches, profile curtains, and
the fine-tuning samples that pair them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .normalization import SENTINEL

CLOUD_TYPES = (
    "No Cloud", "Cirrus", "Altostratus", "Altocumulus", "Stratus",
    "Stratocumulus", "Cumulus", "Nimbostratus", "Deep Convection",
)
N_CLOUD_TYPES = len(CLOUD_TYPES)


def column_cloud_type(level_classes: np.ndarray) -> int:
    """Collapse per-level class labels to one per-column label.

    Most frequent non-clear class wins; frequency ties go to the lower class
    id; a column with no cloudy level is "No Cloud".
    """
    labels = np.asarray(level_classes)
    cloudy = labels[labels > 0]
    if cloudy.size == 0:
        return 0
    return int(np.bincount(cloudy, minlength=N_CLOUD_TYPES).argmax())


@dataclass
class SpectralPatch:
    """Normalized multi-spectral imagery with its geometry metadata.

    values: (P, P, 11) in [-1, 1]; lat/lon per pixel in degrees; timestamp
    UTC seconds; angles in degrees at the patch center.
    """
    values: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    timestamp: int
    solar_zenith: float
    solar_azimuth: float
    sat_zenith: float
    sat_azimuth: float
    satellite_id: str

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[2] != 11:
            raise ValueError(f"patch values must be (P, P, 11), got {self.values.shape}")
        if self.values.size and (self.values.min() < -1.0 or self.values.max() > 1.0):
            raise ValueError("patch values outside [-1, 1]")
        for name, angle, hi in (("solar_zenith", self.solar_zenith, 180.0),
                                ("sat_zenith", self.sat_zenith, 180.0)):
            if not 0.0 <= angle <= hi:
                raise ValueError(f"{name} {angle} outside [0, {hi}]")
        for name, angle in (("solar_azimuth", self.solar_azimuth),
                            ("sat_azimuth", self.sat_azimuth)):
            if not 0.0 <= angle < 360.0:
                raise ValueError(f"{name} {angle} outside [0, 360)")


@dataclass
class ProfileCurtain:
    """Along-track vertical profiles: (L, 80) per variable, normalized, with
    SENTINEL marking missing levels; one cloud-type label per column."""
    lat: np.ndarray
    lon: np.ndarray
    time: np.ndarray
    z: np.ndarray
    iwc: np.ndarray
    re: np.ndarray
    cloud_type: np.ndarray

    def __post_init__(self):
        n = len(self.lat)
        for name in ("lon", "time", "cloud_type"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"curtain field {name} length != {n}")
        for name in ("z", "iwc", "re"):
            arr = getattr(self, name)
            if arr.shape != (n, 80):
                raise ValueError(f"curtain {name} must be ({n}, 80), got {arr.shape}")

    def __len__(self):
        return len(self.lat)

    def stacked(self) -> np.ndarray:
        """(L, 3, 80) in variable order z, iwc, re."""
        return np.stack([self.z, self.iwc, self.re], axis=1)


@dataclass
class Sample:
    """One fine-tuning unit: a patch plus targets painted on its track pixels.

    Targets are stored sparsely as (T, 3, 80) rows aligned with
    (track_rows, track_cols); the dense (P, P, 3, 80) view exists only where
    the mask is true, SENTINEL elsewhere.
    """
    sample_id: str
    patch: SpectralPatch
    track_rows: np.ndarray
    track_cols: np.ndarray
    targets: np.ndarray
    column_types: np.ndarray
    split: str = "train"
    kind: str = "general"

    def __post_init__(self):
        t = len(self.track_rows)
        if t < 1:
            raise ValueError("sample must contain at least one track pixel")
        if len(self.track_cols) != t or len(self.column_types) != t:
            raise ValueError("track index arrays disagree in length")
        if self.targets.shape != (t, 3, 80):
            raise ValueError(f"targets must be ({t}, 3, 80), got {self.targets.shape}")

    @property
    def n_track(self) -> int:
        return len(self.track_rows)

    def track_mask(self) -> np.ndarray:
        side = self.patch.values.shape[0]
        mask = np.zeros((side, side), dtype=bool)
        mask[self.track_rows, self.track_cols] = True
        return mask

    def dense_targets(self) -> np.ndarray:
        side = self.patch.values.shape[0]
        dense = np.full((side, side, 3, 80), SENTINEL, dtype=self.targets.dtype)
        dense[self.track_rows, self.track_cols] = self.targets
        return dense
