"""Procedural 3-D cloud scenes.

A scene is built on a 125-level native height grid (index 0 = 23 km, 0.2 km
spacing, so levels below index 104 sit near or under the ground) and cropped
to the 80 retained levels before storage, exactly as real profiles are.
Clear voxels hold the physical minima (Z = -30 dBZ, IWC = 1e-5 g/m^3) and
r_e = 0; cloudy voxels get coupled IWC / r_e / Z fields so the variables
share structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data.normalization import NORMALIZATION, crop_heights
from .noise import fractal_noise, sigmoid

N_LEVELS_NATIVE = 125
N_LEVELS = 80
LEVEL_SPACING_KM = 0.2
TOP_KM = 23.0  # height of native level 0

# physical height of each retained level, index 0 = 18.0 km, last = 2.2 km
HEIGHTS_KM = crop_heights(TOP_KM - LEVEL_SPACING_KM * np.arange(N_LEVELS_NATIVE))

SURFACE_TEMP_K = 290.0
LAPSE_K_PER_KM = 6.0

# Z(IWC, r_e) coupling constants: dBZ = 10*log10(IWC) + 30*log10(re/20) + 5
Z_IWC_COEF = 10.0
Z_RE_COEF = 30.0
Z_RE_REF_UM = 20.0
Z_OFFSET_DB = 5.0
Z_NOISE_DB = 1.2

CLEAR_Z = NORMALIZATION["z"].vmin
CLEAR_IWC = NORMALIZATION["iwc"].vmin
CLEAR_RE = 0.0

PIXEL_DEG = 0.02  # equirectangular grid spacing

_GEO_SLOTS = {"SYNTH": 0.0}

# named RNG substreams, all derived from (seed, stream)
_STREAMS = {name: i for i, name in enumerate(
    ("coverage", "texture", "cth", "thickness", "amp", "re", "znoise",
     "phase", "geometry", "imaging", "track"))}


def stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng((int(seed), _STREAMS[name]))


@dataclass
class Scene:
    seed: int
    kind: str                   # general | storm
    timestamp: int              # UTC seconds
    lat: np.ndarray             # (H,) degrees, row centers
    lon: np.ndarray             # (W,) degrees, column centers
    z: np.ndarray               # (H, W, 80) dBZ
    iwc: np.ndarray             # (H, W, 80) g/m^3
    re: np.ndarray              # (H, W, 80) micrometers
    cloud_class: np.ndarray     # (H, W, 80) uint8 per-level labels
    solar_zenith: float
    solar_azimuth: float
    sat_zenith: float
    sat_azimuth: float

    @property
    def shape(self):
        return self.z.shape[:2]

    def column_cloudy_fraction(self) -> float:
        return float((self.cloud_class > 0).any(axis=2).mean())


def _scene_time(rng: np.random.Generator, day_pool=None) -> int:
    """UTC timestamp inside 2021 with a controllable day-of-month."""
    month_starts = (0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334)
    month = int(rng.integers(0, 12))
    days_in = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)[month]
    if day_pool is None:
        day = int(rng.integers(1, days_in + 1))
    else:
        pool = [d for d in day_pool if d <= days_in]
        day = int(pool[rng.integers(0, len(pool))])
    second = int(rng.integers(0, 86_400))
    epoch_2021 = 1_609_459_200
    return epoch_2021 + ((month_starts[month] + day - 1) * 86_400) + second


def _geometry(rng: np.random.Generator, lat0: float, frac_day: float):
    """Plausible solar/viewing angles; synthetic but range-correct."""
    solar_elev = 60.0 * np.cos(2 * np.pi * (frac_day - 0.5)) - abs(lat0) * 0.4
    solar_zenith = float(np.clip(90.0 - solar_elev, 0.0, 180.0))
    solar_azimuth = float((frac_day * 360.0 + rng.uniform(-20, 20)) % 360.0)
    sat_zenith = float(np.clip(abs(lat0) * 1.1 + rng.uniform(0, 8), 0.0, 80.0))
    sat_azimuth = float(rng.uniform(0, 360.0) % 360.0)
    return solar_zenith, solar_azimuth, sat_zenith, sat_azimuth


def _classify(heights, cloudy, thickness_km, tau_col, texture):
    """Per-level cloud classes for cloudy voxels.

    Height band picks the family; column thickness, optical depth, and the
    texture field pick the member. Pure bookkeeping, not microphysics.
    """
    h = heights[None, None, :]
    d = thickness_km[:, :, None]
    tau = tau_col[:, :, None]
    tex = texture[:, :, None]

    high = h >= 7.0
    mid = (h >= 4.0) & ~high
    low = h < 4.0

    deep = (tau > 1.5) & (d > 5.5)
    cls = np.zeros(cloudy.shape, dtype=np.uint8)
    cls[high & deep] = 8                                      # Deep Convection
    cls[high & ~deep] = 1                                     # Cirrus
    cls[mid & (d > 4.5)] = 7                                  # Nimbostratus
    cls[mid & (d <= 4.5) & (tex > 0.25)] = 3                  # Altocumulus
    cls[mid & (d <= 4.5) & (tex <= 0.25)] = 2                 # Altostratus
    cls[low & (tex > 0.25) & (d > 1.6)] = 5                   # Stratocumulus
    cls[low & (tex > 0.25) & (d <= 1.6)] = 6                  # Cumulus
    cls[low & (tex <= 0.25)] = 4                              # Stratus
    cls[~cloudy] = 0
    return cls


def generate_scene(seed: int, kind: str = "general", size: int = 256) -> Scene:
    """Deterministic per (seed, kind, size)."""
    if kind not in ("general", "storm"):
        raise ValueError(f"unknown scene kind '{kind}'")
    h = w = int(size)

    cov_rng = stream(seed, "coverage")
    coverage = fractal_noise(cov_rng, (h, w), octaves=5, base=4)
    texture = np.abs(fractal_noise(stream(seed, "texture"), (h, w), octaves=6, base=8)) * 0.5
    cth_field = fractal_noise(stream(seed, "cth"), (h, w), octaves=4, base=4)
    thick_field = fractal_noise(stream(seed, "thickness"), (h, w), octaves=4, base=4)
    amp_field = fractal_noise(stream(seed, "amp"), (h, w), octaves=4, base=4)
    re_field = fractal_noise(stream(seed, "re"), (h, w), octaves=4, base=8)

    # cloud-top height and geometric thickness in km
    cth = 4.0 + 10.0 * sigmoid(1.6 * cth_field)
    thickness = 0.6 + 5.5 * sigmoid(1.2 * thick_field)
    cloudy_col = coverage > -0.05

    if kind == "storm":
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        r = np.hypot(yy - cy, xx - cx)
        theta = np.arctan2(yy - cy, xx - cx)
        r_vortex = 0.38 * min(h, w)
        r_eye = 0.045 * min(h, w)
        bands = np.cos(2.0 * theta - r / (0.055 * min(h, w)))
        envelope = np.exp(-np.maximum(r - r_eye, 0.0) / (0.9 * r_vortex))
        vortex_cov = 1.4 * envelope + 0.9 * np.maximum(bands, 0.0) * np.exp(-r / r_vortex)
        coverage = coverage * 0.35 + vortex_cov
        eyewall = (r >= r_eye) & (r < 2.6 * r_eye)
        inside = r < r_vortex
        cloudy_col = coverage > 0.18
        cloudy_col[eyewall] = True
        cloudy_col[r < r_eye] = False                      # clear eye
        cth = np.where(inside, 9.0 + 6.5 * envelope + 1.5 * np.maximum(bands, 0) * np.exp(-r / r_vortex), cth)
        cth = np.clip(cth, 4.0, 15.8)
        thickness = np.where(inside, thickness + 7.0 * envelope, thickness)
        amp_field = np.where(inside, amp_field + 2.2 * envelope, amp_field)

    base = np.maximum(cth - thickness, 2.3)
    thickness_eff = cth - base

    # in-cloud mass amplitude (g/m^3), log-uniform-ish over [1e-2, ~1.3]
    amp = 10.0 ** (-2.0 + 2.1 * sigmoid(1.1 * amp_field))

    levels = HEIGHTS_KM  # (80,) descending from 18.0 to 2.2
    hgrid = levels[None, None, :]
    f = (cth[:, :, None] - hgrid) / np.maximum(thickness_eff[:, :, None], 1e-6)
    in_cloud = cloudy_col[:, :, None] & (f >= 0.0) & (f <= 1.0)

    # vertical mass profile: parabola peaking mid-cloud, with a slow
    # level-phase modulation so columns are not perfectly smooth
    phase = fractal_noise(stream(seed, "phase"), (h, w), octaves=3, base=8) * np.pi
    wobble = 1.0 + 0.35 * np.sin(2.0 * np.pi * hgrid / 5.0 + phase[:, :, None])
    profile = 4.0 * np.clip(f, 0, 1) * (1.0 - np.clip(f, 0, 1)) * wobble

    iwc = np.where(in_cloud, amp[:, :, None] * np.maximum(profile, 0.02), CLEAR_IWC)
    iwc = np.clip(iwc, CLEAR_IWC, NORMALIZATION["iwc"].vmax)

    # effective radius grows from cloud top toward base
    re_top = 8.0 + 12.0 * sigmoid(re_field)
    re_base = 28.0 + 26.0 * sigmoid(re_field + 1.0)
    re = np.where(in_cloud,
                  re_top[:, :, None] + (re_base - re_top)[:, :, None] * np.clip(f, 0, 1) ** 0.7,
                  CLEAR_RE)
    re = np.clip(re, 0.0, NORMALIZATION["re"].vmax)

    znoise = stream(seed, "znoise").standard_normal((h, w, N_LEVELS)) * Z_NOISE_DB
    z = (Z_IWC_COEF * np.log10(np.maximum(iwc, CLEAR_IWC))
         + Z_RE_COEF * np.log10(np.maximum(re, 1.0) / Z_RE_REF_UM)
         + Z_OFFSET_DB + znoise)
    z = np.where(in_cloud, np.clip(z, NORMALIZATION["z"].vmin, NORMALIZATION["z"].vmax), CLEAR_Z)

    tau_col = (iwc * (iwc > CLEAR_IWC)).sum(axis=2) * LEVEL_SPACING_KM
    cloud_class = _classify(levels, in_cloud, thickness_eff, tau_col, texture)

    geo_rng = stream(seed, "geometry")
    lat0 = float(geo_rng.uniform(-55.0, 55.0))
    lon0 = float(geo_rng.uniform(-180.0, 180.0))
    lat = lat0 + (np.arange(h) - h / 2) * PIXEL_DEG
    lon = lon0 + (np.arange(w) - w / 2) * PIXEL_DEG
    day_pool = (28, 29, 30, 31) if kind == "storm" else None
    timestamp = _scene_time(geo_rng, day_pool)
    frac_day = (timestamp % 86_400) / 86_400.0
    sz, sa, vz, va = _geometry(geo_rng, lat0, frac_day)

    return Scene(
        seed=seed, kind=kind, timestamp=timestamp, lat=lat, lon=lon,
        z=z.astype(np.float32), iwc=iwc.astype(np.float32), re=re.astype(np.float32),
        cloud_class=cloud_class,
        solar_zenith=sz, solar_azimuth=sa, sat_zenith=vz, sat_azimuth=va,
    )
