"""Model evaluation over stored samples: prediction, track extraction,
stratified reports, and the per-height climatology baseline."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .data.manifest import SampleRecord
from .data.normalization import NORMALIZATION, SENTINEL, denormalize
from .data.structures import Sample
from .metrics import MetricReport, SampleEval, sample_eval_from_tracks, stratify
from .models.metadata import patch_metadata
from .tensor.core import Tensor, no_grad
from .training.batches import PatchCache
from .training.loss import VAR_INDEX

log = logging.getLogger(__name__)


def predict_volume(model, patch) -> np.ndarray:
    """Full-patch normalized prediction volume (P, P, V, 80).

    Works on any SpectralPatch, with or without a ground-truth track.
    """
    side = patch.values.shape[0]
    expected = getattr(getattr(model, "config", None), "image_size", None)
    if expected is not None and expected != side:
        raise ValueError(
            f"model expects {expected}px patches, got {side}px")
    x = Tensor(patch.values[None].astype(np.float32))
    with no_grad():
        if model.uses_metadata:
            meta = Tensor(patch_metadata(patch)[None].astype(np.float32))
            pred = model(x, meta)
        else:
            pred = model(x)
    v = len(model.variables)
    return pred.data.reshape(side, side, v, 80)


def denormalize_volume(volume_norm: np.ndarray,
                       variables: Sequence[str]) -> np.ndarray:
    """(P, P, V, 80) normalized -> physical units, clipped to valid range."""
    out = np.empty_like(volume_norm, dtype=np.float64)
    for i, var in enumerate(variables):
        out[:, :, i] = denormalize(np.clip(volume_norm[:, :, i], -1.0, 1.0),
                                   NORMALIZATION[var])
    return out


def sample_eval(model, sample: Sample) -> SampleEval:
    """Evaluate one stored sample along its track."""
    volume = predict_volume(model, sample.patch)
    pred_track = volume[sample.track_rows, sample.track_cols]   # (T, V, 80)
    idx = [VAR_INDEX[v] for v in model.variables]
    target_track = sample.targets[:, idx, :]
    return sample_eval_from_tracks(
        pred_track, target_track, sample.column_types,
        sample.patch.lat[sample.track_rows],
        sample.patch.lon[sample.track_cols],
        variables=tuple(model.variables))


def evaluate_records(model, records: Sequence[SampleRecord], root,
                     workers: int = 1) -> Tuple[MetricReport, List[SampleEval]]:
    """Stratified MetricReport over the given finetune records."""
    if not records:
        raise ValueError("no records to evaluate")
    cache = PatchCache(root)
    samples = [cache.sample(rec) for rec in records]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            evals = list(pool.map(lambda s: sample_eval(model, s), samples))
    else:
        evals = [sample_eval(model, s) for s in samples]
    return stratify(evals), evals


def per_height_climatology(samples: Sequence[Sample],
                           variables: Sequence[str]) -> Dict[str, np.ndarray]:
    """Physical mean target per height level over valid training cells."""
    idx = [VAR_INDEX[v] for v in variables]
    sums = {v: np.zeros(80) for v in variables}
    counts = {v: np.zeros(80) for v in variables}
    for s in samples:
        tracks = s.targets[:, idx, :].astype(np.float64)
        valid = ~np.any(s.targets == SENTINEL, axis=1)          # (T, 80)
        for i, var in enumerate(variables):
            phys = denormalize(np.clip(tracks[:, i], -1.0, 1.0),
                               NORMALIZATION[var])
            sums[var] += np.where(valid, phys, 0.0).sum(axis=0)
            counts[var] += valid.sum(axis=0)
    out = {}
    for var in variables:
        if (counts[var] == 0).any():
            raise ValueError("climatology needs at least one valid track cell")
        out[var] = sums[var] / counts[var]
    return out


def climatology_eval(sample: Sample, clim: Dict[str, np.ndarray],
                     variables: Sequence[str]) -> SampleEval:
    """SampleEval of the constant per-height predictor on one sample."""
    idx = [VAR_INDEX[v] for v in variables]
    target_track = sample.targets[:, idx, :]
    ev = sample_eval_from_tracks(
        target_track, target_track, sample.column_types,
        sample.patch.lat[sample.track_rows],
        sample.patch.lon[sample.track_cols], variables=tuple(variables))
    for var in variables:
        tiled = np.broadcast_to(clim[var], ev.target[var].shape)
        ev.pred[var] = np.where(ev.valid, tiled, ev.target[var])
    return ev


def load_finetune_samples(records: Sequence[SampleRecord], root,
                          cache: Optional[PatchCache] = None) -> List[Sample]:
    cache = cache or PatchCache(root)
    return [cache.sample(rec) for rec in records]
