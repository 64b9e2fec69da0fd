"""Scene metadata encoded as a fixed-width conditioning vector.

Cyclic quantities (fraction of day, fraction of year, longitude, azimuths)
enter as (sin, cos) pairs so midnight sits next to 23:59; zenith angles and
latitude are bounded, not cyclic, and enter linearly scaled to [0, 1].
Layout, 13 features:

    0 sin(day)   1 cos(day)    2 sin(year)  3 cos(year)
    4 lat01      5 sin(lon)    6 cos(lon)
    7 solar_zen01  8 sin(solar_az)  9 cos(solar_az)
   10 sat_zen01  11 sin(sat_az)   12 cos(sat_az)
"""

from __future__ import annotations

import datetime
import math

import numpy as np

from ..data.structures import SpectralPatch

METADATA_DIM = 13


def _year_fraction(ts: int) -> float:
    dt = datetime.datetime.fromtimestamp(int(ts), tz=datetime.timezone.utc)
    start = datetime.datetime(dt.year, 1, 1, tzinfo=datetime.timezone.utc)
    end = datetime.datetime(dt.year + 1, 1, 1, tzinfo=datetime.timezone.utc)
    return (dt - start).total_seconds() / (end - start).total_seconds()


def metadata_vector(timestamp: int, lat: float, lon: float,
                    solar_zenith: float, solar_azimuth: float,
                    sat_zenith: float, sat_azimuth: float) -> np.ndarray:
    frac_day = (int(timestamp) % 86_400) / 86_400.0
    frac_year = _year_fraction(timestamp)
    two_pi = 2.0 * math.pi
    rad = math.radians
    out = np.array([
        math.sin(two_pi * frac_day), math.cos(two_pi * frac_day),
        math.sin(two_pi * frac_year), math.cos(two_pi * frac_year),
        (lat + 90.0) / 180.0,
        math.sin(rad(lon)), math.cos(rad(lon)),
        solar_zenith / 180.0,
        math.sin(rad(solar_azimuth)), math.cos(rad(solar_azimuth)),
        sat_zenith / 180.0,
        math.sin(rad(sat_azimuth)), math.cos(rad(sat_azimuth)),
    ], dtype=np.float64)
    return out


def patch_metadata(patch: SpectralPatch) -> np.ndarray:
    """Metadata vector at the patch center."""
    lat = float(patch.lat[len(patch.lat) // 2])
    lon = float(patch.lon[len(patch.lon) // 2])
    return metadata_vector(patch.timestamp, lat, lon,
                           patch.solar_zenith, patch.solar_azimuth,
                           patch.sat_zenith, patch.sat_azimuth)
