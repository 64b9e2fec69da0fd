"""Forward model: scene volume -> 11-channel imagery.

Each channel sees the column through a fixed Gaussian-in-height weighting
profile; staggered centers give different channels different effective
depths, which is what makes vertical structure partially recoverable from
the 2-D imagery. Reflectance channels brighten with weighted optical depth;
thermal channels cool toward the emission-level temperature as the cloud
turns opaque. Deliberately simple, strictly monotone in column mass.
"""

from __future__ import annotations

import numpy as np

from ..data.channels import INSTRUMENTS
from ..data.normalization import NORMALIZATION, normalize
from .scene import (HEIGHTS_KM, LAPSE_K_PER_KM, LEVEL_SPACING_KM, Scene,
                    SURFACE_TEMP_K, stream)

# per-channel weighting profile (center km, width km), extinction scale, and
# clear-sky background: surface albedo (%) for reflectance channels, an
# effective clear-column brightness temperature (K) for thermal ones
CHANNEL_TABLE = (
    # (center, width, k, background)
    (9.0, 6.0, 0.55, 5.0),
    (8.0, 6.0, 0.60, 5.0),
    (10.0, 5.0, 0.70, 5.0),
    (11.0, 4.0, 0.85, 290.0),
    (12.5, 2.5, 1.20, 252.0),
    (10.5, 2.5, 1.10, 262.0),
    (8.0, 3.5, 0.95, 290.0),
    (11.5, 3.0, 0.90, 282.0),
    (7.0, 5.0, 1.00, 290.0),
    (6.0, 5.0, 1.00, 290.0),
    (9.5, 2.0, 1.05, 266.0),
)

N_CHANNELS = len(CHANNEL_TABLE)
CHANNEL_KINDS = tuple(c.kind for c in INSTRUMENTS["SYNTH"])
REFLECTANCE_CEILING = 90.0

_CENTERS = np.array([c[0] for c in CHANNEL_TABLE])
_WIDTHS = np.array([c[1] for c in CHANNEL_TABLE])
_KSCALE = np.array([c[2] for c in CHANNEL_TABLE])
_BACKGROUND = np.array([c[3] for c in CHANNEL_TABLE])

# (80, 11) height weights shared by every scene
WEIGHTS = np.exp(-0.5 * ((HEIGHTS_KM[:, None] - _CENTERS[None, :]) / _WIDTHS[None, :]) ** 2)

_RE_SENSITIVE_CHANNEL = 2  # the short-wave IR channel darkens for large particles


def render_imagery(scene: Scene, noise_refl: float = 0.4, noise_bt: float = 0.4,
                   rng: np.random.Generator = None) -> np.ndarray:
    """(H, W, 11) physical-unit imagery; deterministic for a fixed scene."""
    if rng is None:
        rng = stream(scene.seed, "imaging")
    iwc = scene.iwc.astype(np.float64)
    h, w = iwc.shape[:2]

    tau = np.tensordot(iwc, WEIGHTS, axes=([2], [0])) * LEVEL_SPACING_KM  # (H, W, 11)
    mass_w = np.tensordot(iwc * HEIGHTS_KM[None, None, :], WEIGHTS, axes=([2], [0]))
    h_eff = mass_w / np.maximum(np.tensordot(iwc, WEIGHTS, axes=([2], [0])), 1e-12)

    # particle size at cloud top (first in-cloud level scanning down from 18 km)
    has_cloud = (scene.re > 0).any(axis=2)
    top_idx = np.argmax(scene.re > 0, axis=2)
    rows, cols = np.indices((h, w))
    re_top = np.where(has_cloud, scene.re[rows, cols, top_idx], 20.0).astype(np.float64)

    out = np.empty((h, w, N_CHANNELS))
    for c in range(N_CHANNELS):
        tau_c = tau[:, :, c]
        if c == _RE_SENSITIVE_CHANNEL:
            tau_c = tau_c * np.sqrt(20.0 / np.clip(re_top, 5.0, 160.0))
        opacity = 1.0 - np.exp(-_KSCALE[c] * tau_c)
        if CHANNEL_KINDS[c] == "reflectance":
            val = _BACKGROUND[c] + (REFLECTANCE_CEILING - _BACKGROUND[c]) * opacity
            val = val + rng.standard_normal((h, w)) * noise_refl
            spec = NORMALIZATION["reflectance"]
        else:
            t_cloud = SURFACE_TEMP_K - LAPSE_K_PER_KM * h_eff[:, :, c]
            val = (1.0 - opacity) * _BACKGROUND[c] + opacity * t_cloud
            val = val + rng.standard_normal((h, w)) * noise_bt
            spec = NORMALIZATION["bt"]
        out[:, :, c] = np.clip(val, spec.vmin, spec.vmax)
    return out


def normalize_imagery(imagery: np.ndarray) -> np.ndarray:
    """Physical channels -> [-1, 1] float32 using each channel's kind."""
    out = np.empty_like(imagery, dtype=np.float32)
    for c in range(N_CHANNELS):
        spec = NORMALIZATION[CHANNEL_KINDS[c]]
        out[:, :, c] = normalize(imagery[:, :, c], spec)
    return out
