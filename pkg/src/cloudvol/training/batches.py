"""Batch assembly: satellite-consistent grouping with per-epoch shuffling.

Every emitted batch holds samples from a single satellite. Pre-training
batches are square crops taken from the stored full-scene patches, random
per epoch during training and centered for validation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence

import numpy as np

from ..data.manifest import SampleRecord
from ..data.structures import Sample, SpectralPatch
from ..dataset import load_patch, load_sample
from ..models.metadata import patch_metadata


@dataclass
class PretrainBatch:
    batch_id: str
    x: np.ndarray       # (B, S, S, 11)
    meta: np.ndarray    # (B, 13)


@dataclass
class FinetuneBatch:
    batch_id: str
    x: np.ndarray        # (B, P, P, 11)
    meta: np.ndarray     # (B, 13)
    targets: np.ndarray  # (B, P, P, 3, 80) dense, sentinel off-track
    mask: np.ndarray     # (B, P, P) bool
    samples: List[Sample]


def _grouped_order(records: Sequence[SampleRecord], batch_size: int,
                   rng: Optional[np.random.Generator]) -> List[List[SampleRecord]]:
    """Batches of records, each single-satellite, optionally shuffled."""
    if not records:
        raise ValueError("empty split: no records to batch")
    groups: Dict[str, List[SampleRecord]] = {}
    for rec in records:
        groups.setdefault(rec.satellite_id, []).append(rec)
    batches = []
    for sat in sorted(groups):
        members = groups[sat]
        if rng is not None:
            members = [members[i] for i in rng.permutation(len(members))]
        for i in range(0, len(members), batch_size):
            batches.append(members[i:i + batch_size])
    if rng is not None:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


class PatchCache:
    """Keeps decoded bundles in memory across epochs."""

    def __init__(self, root):
        self.root = Path(root)
        self._patches: Dict[str, SpectralPatch] = {}
        self._samples: Dict[str, Sample] = {}

    def patch(self, rec: SampleRecord) -> SpectralPatch:
        if rec.sample_id not in self._patches:
            self._patches[rec.sample_id] = load_patch(self.root / rec.path)
        return self._patches[rec.sample_id]

    def sample(self, rec: SampleRecord) -> Sample:
        if rec.sample_id not in self._samples:
            self._samples[rec.sample_id] = load_sample(self.root / rec.path)
        return self._samples[rec.sample_id]


def _crop(values: np.ndarray, side: int, r0: int, c0: int) -> np.ndarray:
    return values[r0:r0 + side, c0:c0 + side]


def pretrain_batches(records: Sequence[SampleRecord], cache: PatchCache,
                     batch_size: int, crop_side: int, epoch: int,
                     seed: int, shuffle: bool = True) -> Iterator[PretrainBatch]:
    """Yield crops of the stored patches; random when shuffling, else centered."""
    rng = np.random.default_rng((seed, 104729, epoch)) if shuffle else None
    for b, recs in enumerate(_grouped_order(records, batch_size, rng)):
        xs, metas = [], []
        for rec in recs:
            patch = cache.patch(rec)
            h, w = patch.values.shape[:2]
            if h < crop_side or w < crop_side:
                raise ValueError(
                    f"patch {rec.sample_id} side {h} smaller than crop {crop_side}")
            if rng is not None:
                r0 = int(rng.integers(0, h - crop_side + 1))
                c0 = int(rng.integers(0, w - crop_side + 1))
            else:
                r0, c0 = (h - crop_side) // 2, (w - crop_side) // 2
            cropped = SpectralPatch(
                values=_crop(patch.values, crop_side, r0, c0),
                lat=patch.lat[r0:r0 + crop_side],
                lon=patch.lon[c0:c0 + crop_side],
                timestamp=patch.timestamp,
                solar_zenith=patch.solar_zenith,
                solar_azimuth=patch.solar_azimuth,
                sat_zenith=patch.sat_zenith,
                sat_azimuth=patch.sat_azimuth,
                satellite_id=patch.satellite_id)
            xs.append(cropped.values)
            metas.append(patch_metadata(cropped))
        yield PretrainBatch(batch_id=f"epoch{epoch}/batch{b}",
                            x=np.stack(xs).astype(np.float32),
                            meta=np.stack(metas).astype(np.float32))


def finetune_batches(records: Sequence[SampleRecord], cache: PatchCache,
                     batch_size: int, epoch: int, seed: int,
                     shuffle: bool = True) -> Iterator[FinetuneBatch]:
    rng = np.random.default_rng((seed, 224737, epoch)) if shuffle else None
    for b, recs in enumerate(_grouped_order(records, batch_size, rng)):
        samples = [cache.sample(rec) for rec in recs]
        x = np.stack([s.patch.values for s in samples]).astype(np.float32)
        meta = np.stack([patch_metadata(s.patch) for s in samples]).astype(np.float32)
        targets = np.stack([s.dense_targets() for s in samples])
        mask = np.stack([s.track_mask() for s in samples])
        yield FinetuneBatch(batch_id=f"epoch{epoch}/batch{b}", x=x, meta=meta,
                            targets=targets, mask=mask, samples=samples)
