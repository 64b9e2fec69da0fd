"""Instrument channel tables and nearest-wavelength channel matching.

Wavelengths are the published central wavelengths (micrometers) of the
SEVIRI, ABI, and AHI imagers. The synthetic imager reuses the SEVIRI grid,
which is also the 11-channel reference every source is matched against.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence

logger = logging.getLogger(__name__)

REFLECTANCE_BT_CUTOVER_UM = 3.0  # below: solar reflectance; above: thermal


@dataclass(frozen=True)
class ChannelSpec:
    satellite_id: str   # MSG | GOES | HIMAWARI | SYNTH
    index: int
    wavelength_um: float
    kind: str           # reflectance | bt

    def __post_init__(self):
        if self.wavelength_um <= 0:
            raise ValueError(f"channel {self.index}: wavelength must be positive")
        if self.kind not in ("reflectance", "bt"):
            raise ValueError(f"channel {self.index}: unknown kind '{self.kind}'")


def _kind(wavelength: float) -> str:
    return "reflectance" if wavelength < REFLECTANCE_BT_CUTOVER_UM else "bt"


def _table(satellite_id: str, wavelengths: Sequence[float]) -> List[ChannelSpec]:
    return [ChannelSpec(satellite_id, i, w, _kind(w)) for i, w in enumerate(wavelengths)]


SEVIRI_UM = (0.635, 0.81, 1.64, 3.92, 6.25, 7.35, 8.70, 9.66, 10.80, 12.00, 13.40)
ABI_UM = (0.47, 0.64, 0.865, 1.378, 1.61, 2.25, 3.90, 6.19, 6.95, 7.34,
          8.50, 9.61, 10.35, 11.20, 12.30, 13.30)
AHI_UM = (0.47, 0.51, 0.64, 0.86, 1.6, 2.3, 3.9, 6.2, 6.9, 7.3,
          8.6, 9.6, 10.4, 11.2, 12.4, 13.3)

INSTRUMENTS = {
    "MSG": _table("MSG", SEVIRI_UM),
    "GOES": _table("GOES", ABI_UM),
    "HIMAWARI": _table("HIMAWARI", AHI_UM),
    "SYNTH": _table("SYNTH", SEVIRI_UM),
}

REFERENCE_CHANNELS = INSTRUMENTS["MSG"]


def instrument_channels(satellite_id: str) -> List[ChannelSpec]:
    try:
        return INSTRUMENTS[satellite_id]
    except KeyError:
        raise KeyError(f"unknown satellite id '{satellite_id}'") from None


def match_channels(source: Sequence[ChannelSpec],
                   reference: Sequence[ChannelSpec] = REFERENCE_CHANNELS) -> List[int]:
    """For each reference channel, the source channel index with the nearest
    central wavelength. Exact-distance ties go to the lower source index."""
    if len(reference) != 11:
        raise ValueError(f"reference must have 11 channels, got {len(reference)}")
    if len(source) < 11:
        raise ValueError(f"source must have at least 11 channels, got {len(source)}")
    mapping = []
    for ref in reference:
        best_idx, best_dist = -1, float("inf")
        for j, ch in enumerate(source):
            d = abs(ch.wavelength_um - ref.wavelength_um)
            if d < best_dist:  # strict: first (lowest-index) winner kept on ties
                best_idx, best_dist = j, d
        mapping.append(best_idx)
    if len(set(mapping)) < len(mapping):
        distinct = len({ch.wavelength_um for ch in source})
        forced = distinct < len(reference)
        logger.log(logging.INFO if forced else logging.WARNING,
                   "channel matching selected duplicates (%s): %s",
                   "forced by table" if forced else "unforced", mapping)
    return mapping
