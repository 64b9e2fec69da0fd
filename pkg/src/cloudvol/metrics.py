"""Evaluation battery for predicted cloud-property curtains.

All metrics run in physical units after denormalization. A voxel counts as
cloud when its reflectivity reaches CLOUD_THRESHOLD_DBZ; that threshold is a
documented choice (near the sensitivity floor of spaceborne cloud radar),
and everything downstream (Dice, cloudy-column stratification, the dataset
cloudy-fraction filter) inherits it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.signal import convolve2d

from .data.normalization import NORMALIZATION, SENTINEL, TARGET_VARIABLES, denormalize
from .data.structures import CLOUD_TYPES

CLOUD_THRESHOLD_DBZ = -25.0

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

PSNR_CAP_DB = 100.0


def cloud_mask(z, normalized: bool = False) -> np.ndarray:
    """Voxel cloud occupancy from reflectivity.

    Cloudy means Z >= -25 dBZ (inclusive). Sentinel-coded missing values map
    far below the threshold, so they never count as cloud.
    """
    arr = np.asarray(z, dtype=np.float64)
    if normalized:
        arr = denormalize(arr, NORMALIZATION["z"])
    return arr >= CLOUD_THRESHOLD_DBZ


def column_cloudy(z, normalized: bool = False) -> np.ndarray:
    """Column is cloudy iff any of its height levels is cloudy."""
    return cloud_mask(z, normalized=normalized).any(axis=-1)


def rmse(pred, target, mask=None) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if mask is not None:
        p, t = p[mask], t[mask]
    if p.size == 0:
        raise ValueError("rmse over an empty selection")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def psnr_from_mse(mse: float, data_range: float) -> float:
    if mse < data_range * data_range * 1e-10:
        return PSNR_CAP_DB
    return 10.0 * math.log10(data_range * data_range / mse)


def psnr(pred, target, data_range: float, mask=None) -> float:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if mask is not None:
        p, t = p[mask], t[mask]
    if p.size == 0:
        raise ValueError("psnr over an empty selection")
    return psnr_from_mse(float(np.mean((p - t) ** 2)), data_range)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


_SSIM_W = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)


def ssim(pred, target, data_range: float) -> float:
    """Mean local structural similarity over a 2D curtain.

    Gaussian-weighted 11x11 windows; curtains smaller than the window in
    either direction fall back to a single uniform window over everything.
    """
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError(f"ssim needs matching 2D curtains, got {x.shape} vs {y.shape}")
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    if min(x.shape) < SSIM_WINDOW:
        mx, my = x.mean(), y.mean()
        vx, vy = x.var(), y.var()
        cxy = ((x - mx) * (y - my)).mean()
        return float(((2 * mx * my + c1) * (2 * cxy + c2))
                     / ((mx * mx + my * my + c1) * (vx + vy + c2)))

    w = _SSIM_W
    mx = convolve2d(x, w, mode="valid")
    my = convolve2d(y, w, mode="valid")
    mxx = convolve2d(x * x, w, mode="valid")
    myy = convolve2d(y * y, w, mode="valid")
    mxy = convolve2d(x * y, w, mode="valid")
    vx = mxx - mx * mx
    vy = myy - my * my
    cxy = mxy - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float((num / den).mean())


def dice(pred_mask, target_mask) -> float:
    a = np.asarray(pred_mask, dtype=bool)
    b = np.asarray(target_mask, dtype=bool)
    if a.shape != b.shape:
        raise ValueError("dice masks must share a shape")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


@dataclass
class SampleEval:
    """One sample's pred/target curtains in physical units.

    pred/target map variable name to a (T, 80) array; types is the (T,)
    per-column cloud label; valid marks cells where the target is defined.
    """
    pred: Dict[str, np.ndarray]
    target: Dict[str, np.ndarray]
    types: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        t = len(self.types)
        for var in self.target:
            if self.target[var].shape != (t, 80) or self.pred[var].shape != (t, 80):
                raise ValueError("curtain shapes disagree with the type labels")
        if self.valid is None:
            self.valid = np.ones((t, 80), dtype=bool)

    @property
    def n_columns(self) -> int:
        return len(self.types)


def sample_eval_from_tracks(pred_norm, target_norm, types, lat, lon,
                            variables=TARGET_VARIABLES) -> SampleEval:
    """Normalized (T, V, 80) track arrays -> physical-unit SampleEval.

    Sentinel cells in the target become invalid; their physical values are
    copied from the target so masked metrics see zero error there. variables
    names the second axis; single-variable models pass e.g. ("z",).
    """
    pred_norm = np.asarray(pred_norm, dtype=np.float64)
    target_norm = np.asarray(target_norm, dtype=np.float64)
    valid = ~np.any(target_norm == SENTINEL, axis=1)
    pred, target = {}, {}
    for i, var in enumerate(variables):
        spec = NORMALIZATION[var]
        tgt = denormalize(np.where(target_norm[:, i] == SENTINEL, -1.0, target_norm[:, i]), spec)
        prd = denormalize(np.clip(pred_norm[:, i], -1.0, 1.0), spec)
        target[var] = tgt
        pred[var] = np.where(valid, prd, tgt)
    return SampleEval(pred=pred, target=target, types=np.asarray(types),
                      lat=np.asarray(lat, dtype=np.float64),
                      lon=np.asarray(lon, dtype=np.float64), valid=valid)


ALL_STRATUM = "all"
CLOUDY_STRATUM = "cloudy"
CLEAR_STRATUM = "clear"


def _stratum_columns(ev: SampleEval) -> Dict[str, np.ndarray]:
    """Column index sets for every stratum present in one sample."""
    cloudy = column_cloudy(ev.target["z"])
    out = {ALL_STRATUM: np.arange(ev.n_columns)}
    if cloudy.any():
        out[CLOUDY_STRATUM] = np.flatnonzero(cloudy)
    if (~cloudy).any():
        out[CLEAR_STRATUM] = np.flatnonzero(~cloudy)
    for tid, name in enumerate(CLOUD_TYPES):
        sel = np.flatnonzero(ev.types == tid)
        if sel.size:
            out[name] = sel
    return out


def _eval_subset(ev: SampleEval, cols: np.ndarray) -> Dict[str, Dict[str, float]]:
    """Metric values for one sample restricted to the given columns."""
    out = {}
    vmask = ev.valid[cols]
    pred_z = ev.pred["z"][cols]
    target_z = ev.target["z"][cols]
    for var in (v for v in TARGET_VARIABLES if v in ev.target):
        spec = NORMALIZATION[var]
        p = ev.pred[var][cols]
        t = ev.target[var][cols]
        vals = {
            "rmse": rmse(p, t, mask=vmask),
            "psnr": psnr(p, t, spec.physical_range, mask=vmask),
            "ssim": ssim(p, t, spec.physical_range),
        }
        if var == "z":
            vals["dice"] = dice(cloud_mask(pred_z), cloud_mask(target_z))
        out[var] = vals
    return out


@dataclass
class MetricReport:
    """Aggregated evaluation: rows of (variable, stratum, metric, mean, std, n)
    plus how many track columns each stratum contained."""
    rows: List[dict] = field(default_factory=list)
    column_counts: Dict[str, int] = field(default_factory=dict)
    n_samples: int = 0

    def value(self, variable: str, stratum: str, metric: str) -> Tuple[float, float, int]:
        for row in self.rows:
            if (row["variable"], row["stratum"], row["metric"]) == (variable, stratum, metric):
                return row["mean"], row["std"], row["n"]
        raise KeyError(f"no row for {variable}/{stratum}/{metric}")

    def strata(self) -> List[str]:
        return sorted({row["stratum"] for row in self.rows})

    def to_json(self, path) -> None:
        payload = {"n_samples": self.n_samples,
                   "column_counts": self.column_counts,
                   "rows": self.rows}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["variable", "stratum", "metric", "mean", "std", "n"])
            for row in self.rows:
                writer.writerow([row["variable"], row["stratum"], row["metric"],
                                 f"{row['mean']:.10g}", f"{row['std']:.10g}", row["n"]])


def stratify(samples: List[SampleEval]) -> MetricReport:
    """Per-sample metrics aggregated as mean +/- std across samples.

    Strata: every column ("all"), cloudy-only, clear-only, and one stratum
    per cloud type that actually occurs. A stratum empty in a given sample
    simply contributes nothing there; a stratum empty everywhere is absent
    from the report rather than zero.
    """
    per: Dict[Tuple[str, str, str], List[float]] = {}
    counts: Dict[str, int] = {}
    for ev in samples:
        for stratum, cols in _stratum_columns(ev).items():
            counts[stratum] = counts.get(stratum, 0) + int(cols.size)
            for var, vals in _eval_subset(ev, cols).items():
                for metric, v in vals.items():
                    per.setdefault((var, stratum, metric), []).append(v)

    rows = []
    for (var, stratum, metric), vals in sorted(per.items()):
        arr = np.asarray(vals, dtype=np.float64)
        rows.append({"variable": var, "stratum": stratum, "metric": metric,
                     "mean": float(arr.mean()),
                     "std": float(arr.std()),
                     "n": int(arr.size)})
    return MetricReport(rows=rows, column_counts=counts, n_samples=len(samples))


def spatial_rmse_grid(samples: List[SampleEval], bin_deg: float = 5.0,
                      variable: str = "z") -> Dict[Tuple[float, float], Tuple[float, int]]:
    """Per-bin RMSE over all track columns; keys are lower-left bin corners.

    A coordinate exactly on a bin edge belongs to the bin whose lower-left
    corner it is. Bins nothing falls into are simply absent.
    """
    if bin_deg <= 0:
        raise ValueError("bin size must be positive")
    acc: Dict[Tuple[float, float], List[float]] = {}
    for ev in samples:
        err = (ev.pred[variable] - ev.target[variable]) ** 2
        err = np.where(ev.valid, err, np.nan)
        lat_bin = np.floor(ev.lat / bin_deg) * bin_deg
        lon_bin = np.floor(ev.lon / bin_deg) * bin_deg
        for i in range(ev.n_columns):
            key = (float(lat_bin[i]), float(lon_bin[i]))
            cells = err[i][~np.isnan(err[i])]
            if cells.size:
                acc.setdefault(key, []).extend(cells.tolist())
    return {key: (float(np.sqrt(np.mean(v))), len(v)) for key, v in sorted(acc.items())}


def grid_to_array(grid, bin_deg: float = 5.0):
    """Sparse bin dict -> (lat0, lon0, dense RMSE array with NaN gaps)."""
    if not grid:
        return 0.0, 0.0, np.zeros((0, 0))
    lats = sorted({k[0] for k in grid})
    lons = sorted({k[1] for k in grid})
    nlat = int(round((lats[-1] - lats[0]) / bin_deg)) + 1
    nlon = int(round((lons[-1] - lons[0]) / bin_deg)) + 1
    dense = np.full((nlat, nlon), np.nan)
    for (la, lo), (val, _count) in grid.items():
        i = int(round((la - lats[0]) / bin_deg))
        j = int(round((lo - lons[0]) / bin_deg))
        dense[i, j] = val
    return lats[0], lons[0], dense
