"""On-disk dataset layout and the synthetic generation pipeline.

A dataset directory holds one bundle directory per stored item plus a
manifest.json indexing them:

    out/
      manifest.json
      pretrain/<id>/   values.cvt1 lat.cvt1 lon.cvt1 meta.json
      finetune/<id>/   patch.cvt1 lat.cvt1 lon.cvt1 rows.cvt1 cols.cvt1
                       targets.cvt1 types.cvt1 meta.json

Pretrain bundles are full-scene imagery patches; finetune bundles pair a
smaller patch with colocated track targets. Record paths in the manifest are
relative to the dataset root so the directory can be moved wholesale.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .colocate import (assign_split, clamp_center, cloudy_fraction,
                       cloudy_fraction_filter, colocate, extract_patch,
                       track_midpoint)
from .data.cvt1 import read_tensor, write_tensor
from .data.manifest import DatasetManifest, SampleRecord
from .data.structures import Sample, SpectralPatch
from .synth import (generate_scene, normalize_imagery, random_edge_track,
                    render_imagery, sample_track)
from .synth.scene import stream

log = logging.getLogger(__name__)

SCENE_SEED_STRIDE = 1_000_000


def _write_meta(dirpath: Path, meta: dict) -> None:
    (dirpath / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def _read_meta(dirpath: Path) -> dict:
    return json.loads((dirpath / "meta.json").read_text())


def _angles_meta(obj) -> dict:
    return {
        "solar_zenith": obj.solar_zenith, "solar_azimuth": obj.solar_azimuth,
        "sat_zenith": obj.sat_zenith, "sat_azimuth": obj.sat_azimuth,
    }


def save_patch(patch: SpectralPatch, dirpath, sample_id: str, split: str,
               kind: str) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(d / "values.cvt1", patch.values.astype(np.float32))
    write_tensor(d / "lat.cvt1", patch.lat.astype(np.float64))
    write_tensor(d / "lon.cvt1", patch.lon.astype(np.float64))
    meta = {"role": "pretrain", "sample_id": sample_id, "split": split,
            "kind": kind, "satellite_id": patch.satellite_id,
            "timestamp": int(patch.timestamp)}
    meta.update(_angles_meta(patch))
    _write_meta(d, meta)


def load_patch(dirpath) -> SpectralPatch:
    d = Path(dirpath)
    meta = _read_meta(d)
    return SpectralPatch(
        values=read_tensor(d / "values.cvt1"),
        lat=read_tensor(d / "lat.cvt1"),
        lon=read_tensor(d / "lon.cvt1"),
        timestamp=meta["timestamp"],
        solar_zenith=meta["solar_zenith"], solar_azimuth=meta["solar_azimuth"],
        sat_zenith=meta["sat_zenith"], sat_azimuth=meta["sat_azimuth"],
        satellite_id=meta["satellite_id"],
    )


def save_sample(sample: Sample, dirpath) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_tensor(d / "patch.cvt1", sample.patch.values.astype(np.float32))
    write_tensor(d / "lat.cvt1", sample.patch.lat.astype(np.float64))
    write_tensor(d / "lon.cvt1", sample.patch.lon.astype(np.float64))
    write_tensor(d / "rows.cvt1", sample.track_rows.astype(np.int32))
    write_tensor(d / "cols.cvt1", sample.track_cols.astype(np.int32))
    write_tensor(d / "targets.cvt1", sample.targets.astype(np.float32))
    write_tensor(d / "types.cvt1", sample.column_types.astype(np.uint8))
    meta = {"role": "finetune", "sample_id": sample.sample_id,
            "split": sample.split, "kind": sample.kind,
            "satellite_id": sample.patch.satellite_id,
            "timestamp": int(sample.patch.timestamp)}
    meta.update(_angles_meta(sample.patch))
    _write_meta(d, meta)


def load_sample(dirpath) -> Sample:
    d = Path(dirpath)
    meta = _read_meta(d)
    patch = SpectralPatch(
        values=read_tensor(d / "patch.cvt1"),
        lat=read_tensor(d / "lat.cvt1"),
        lon=read_tensor(d / "lon.cvt1"),
        timestamp=meta["timestamp"],
        solar_zenith=meta["solar_zenith"], solar_azimuth=meta["solar_azimuth"],
        sat_zenith=meta["sat_zenith"], sat_azimuth=meta["sat_azimuth"],
        satellite_id=meta["satellite_id"],
    )
    return Sample(
        sample_id=meta["sample_id"],
        patch=patch,
        track_rows=read_tensor(d / "rows.cvt1").astype(np.intp),
        track_cols=read_tensor(d / "cols.cvt1").astype(np.intp),
        targets=read_tensor(d / "targets.cvt1"),
        column_types=read_tensor(d / "types.cvt1"),
        split=meta["split"],
        kind=meta["kind"],
    )


def pretrain_records(manifest: DatasetManifest):
    return [r for r in manifest.samples if r.path.startswith("pretrain/")]


def finetune_records(manifest: DatasetManifest):
    return [r for r in manifest.samples if r.path.startswith("finetune/")]


@dataclass
class GenerateConfig:
    out_dir: str
    n_scenes: int = 8
    seed: int = 0
    storm_fraction: float = 0.25
    scene_size: int = 256
    patch_side: int = 64
    tracks_per_scene: int = 2
    min_cloudy_fraction: float = 0.25


def generate_dataset(cfg: GenerateConfig) -> DatasetManifest:
    """Scenes -> imagery + tracks -> stored bundles plus a manifest.

    Deterministic in cfg: scene i uses seed cfg.seed*stride + i, tracks use
    that scene's dedicated RNG stream. Storm scenes come first in index
    order and always land on late-month days, i.e. in the test split.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = DatasetManifest(channel_maps={"SYNTH": list(range(11))})

    if cfg.n_scenes <= 0:
        log.warning("generate_dataset: zero scenes requested, manifest is empty")
        manifest.save(out / "manifest.json")
        return manifest

    n_storm = int(round(cfg.n_scenes * cfg.storm_fraction))
    n_rejected = 0
    for i in range(cfg.n_scenes):
        kind = "storm" if i < n_storm else "general"
        scene_seed = cfg.seed * SCENE_SEED_STRIDE + i
        scene = generate_scene(scene_seed, kind, size=cfg.scene_size)
        imagery = normalize_imagery(render_imagery(scene))

        pre_id = f"pre-{scene_seed:09d}"
        patch = SpectralPatch(
            values=imagery, lat=scene.lat, lon=scene.lon,
            timestamp=scene.timestamp,
            solar_zenith=scene.solar_zenith, solar_azimuth=scene.solar_azimuth,
            sat_zenith=scene.sat_zenith, sat_azimuth=scene.sat_azimuth,
            satellite_id="SYNTH")
        split = assign_split(scene.timestamp)
        rel = f"pretrain/{pre_id}"
        save_patch(patch, out / rel, pre_id, split, kind)
        manifest.add(SampleRecord(
            sample_id=pre_id, path=rel, satellite_id="SYNTH",
            timestamp=scene.timestamp, split=split,
            cloudy_fraction=scene.column_cloudy_fraction(), kind=kind))

        track_rng = stream(scene_seed, "track")
        for t in range(cfg.tracks_per_scene):
            spec = random_edge_track(track_rng, cfg.scene_size)
            curtain = sample_track(scene, spec)
            coloc = colocate(curtain, scene.lat, scene.lon)
            center = clamp_center(track_midpoint(coloc), cfg.patch_side,
                                  cfg.scene_size, cfg.scene_size)
            ft_id = f"ft-{scene_seed:09d}-{t}"
            sample = extract_patch(imagery, scene, coloc, center,
                                   cfg.patch_side, ft_id, kind=kind)
            if not cloudy_fraction_filter(sample, cfg.min_cloudy_fraction):
                n_rejected += 1
                continue
            rel = f"finetune/{ft_id}"
            save_sample(sample, out / rel)
            manifest.add(SampleRecord(
                sample_id=ft_id, path=rel, satellite_id="SYNTH",
                timestamp=scene.timestamp, split=sample.split,
                cloudy_fraction=cloudy_fraction(sample), kind=kind))

    if n_rejected:
        log.info("generate_dataset: rejected %d mostly-clear samples", n_rejected)
    manifest.save(out / "manifest.json")
    return manifest
