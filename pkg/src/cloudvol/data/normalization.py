"""Fixed min-max normalization of physical variables onto [-1, 1].

Out-of-range physical values are clamped before mapping. Ice water content
is mapped in log10 space. Missing data is encoded as SENTINEL in normalized
space, deliberately outside [-1, 1] so losses and metrics can screen it out.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SENTINEL = -2.0

VARIABLES = ("reflectance", "bt", "z", "iwc", "re")


@dataclass(frozen=True)
class NormalizationSpec:
    variable: str
    vmin: float
    vmax: float
    log_domain: bool = False
    # cached mapped endpoints so normalize(vmin) lands on -1.0 exactly
    lo: float = field(init=False)
    hi: float = field(init=False)

    def __post_init__(self):
        if not self.vmin < self.vmax:
            raise ValueError(f"{self.variable}: min {self.vmin} must be < max {self.vmax}")
        if self.log_domain and self.vmin <= 0:
            raise ValueError(f"{self.variable}: log domain requires positive min")
        lo, hi = (self.vmin, self.vmax)
        if self.log_domain:
            lo, hi = np.log10(lo), np.log10(hi)
        object.__setattr__(self, "lo", float(lo))
        object.__setattr__(self, "hi", float(hi))

    @property
    def physical_range(self) -> float:
        """max - min in physical units (PSNR/SSIM dynamic range)."""
        return self.vmax - self.vmin


NORMALIZATION = {
    "reflectance": NormalizationSpec("reflectance", 0.0, 100.0),      # percent
    "bt": NormalizationSpec("bt", 180.0, 350.0),                      # kelvin
    "z": NormalizationSpec("z", -30.0, 20.0),                         # dBZ
    "iwc": NormalizationSpec("iwc", 1e-5, 10.0, log_domain=True),     # g/m^3
    "re": NormalizationSpec("re", 0.0, 160.0),                        # micrometers
}

TARGET_VARIABLES = ("z", "iwc", "re")


def normalize(values, spec: NormalizationSpec):
    """Physical -> [-1, 1]. Clamps first; rejects non-finite input."""
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ValueError(f"normalize({spec.variable}): non-finite input")
    arr = np.clip(arr, spec.vmin, spec.vmax)
    if spec.log_domain:
        arr = np.log10(arr)
    out = 2.0 * (arr - spec.lo) / (spec.hi - spec.lo) - 1.0
    return out if out.ndim else float(out)


def denormalize(values, spec: NormalizationSpec):
    """[-1, 1] -> physical units. Sentinels must be screened out beforehand."""
    arr = np.asarray(values, dtype=np.float64)
    x = spec.lo + (arr + 1.0) * 0.5 * (spec.hi - spec.lo)
    out = np.power(10.0, x) if spec.log_domain else x
    return out if out.ndim else float(out)


def crop_heights(profile):
    """Drop the 25 uppermost and 20 lowest of 125 height levels.

    Index 0 is the top of the atmosphere, so the kept window is 25..104
    inclusive along the last axis. Length is checked, not assumed.
    """
    arr = np.asarray(profile)
    if arr.shape[-1] != 125:
        raise ValueError(f"crop_heights: expected 125 levels, got {arr.shape[-1]}")
    return arr[..., 25:105]
