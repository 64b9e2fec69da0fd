"""Tests for footprint colocation, patch extraction, filtering, and the
dataset generation pipeline."""

import datetime

import numpy as np
import pytest

from cloudvol.colocate import (assign_split, clamp_center, cloudy_fraction,
                               cloudy_fraction_filter, colocate, extract_patch,
                               track_midpoint)
from cloudvol.data.manifest import DatasetManifest
from cloudvol.data.normalization import NORMALIZATION, SENTINEL, normalize
from cloudvol.data.structures import ProfileCurtain, Sample, SpectralPatch
from cloudvol.dataset import (GenerateConfig, finetune_records,
                              generate_dataset, load_patch, load_sample,
                              pretrain_records, save_sample)
from cloudvol.synth import TrackSpec, generate_scene, sample_track


def _ts(day, month=3, hour=12):
    return int(datetime.datetime(2021, month, day, hour,
                                 tzinfo=datetime.timezone.utc).timestamp())


class TestAssignSplit:

    @pytest.mark.parametrize("day,expected", [
        (1, "excluded"), (2, "train"), (15, "train"), (22, "train"),
        (23, "excluded"), (24, "val"), (26, "val"), (27, "excluded"),
        (28, "test"), (31, "test"),
    ])
    def test_day_rule(self, day, expected):
        assert assign_split(_ts(day)) == expected

    def test_every_day_of_month_covered(self):
        seen = {assign_split(_ts(d)) for d in range(1, 32)}
        assert seen == {"train", "val", "test", "excluded"}

    def test_uses_utc_day(self):
        # 23:30 UTC on day 22 is still a training day regardless of locale
        t = int(datetime.datetime(2021, 3, 22, 23, 30,
                                  tzinfo=datetime.timezone.utc).timestamp())
        assert assign_split(t) == "train"


def _curtain(lat, lon, z=None, iwc=None, re=None, types=None, t0=0.0):
    n = len(lat)
    z = np.full((n, 80), -0.5, np.float32) if z is None else z
    iwc = np.full((n, 80), -0.5, np.float32) if iwc is None else iwc
    re = np.full((n, 80), -0.5, np.float32) if re is None else re
    types = np.zeros(n, np.uint8) if types is None else np.asarray(types, np.uint8)
    return ProfileCurtain(lat=np.asarray(lat, float), lon=np.asarray(lon, float),
                          time=t0 + 0.16 * np.arange(n), z=z, iwc=iwc, re=re,
                          cloud_type=types)


class TestColocate:

    def test_nearest_pixel_arithmetic(self):
        grid = np.array([0.0, 1.0, 2.0])
        track = colocate(_curtain([0.4], [0.6]), grid, grid)
        assert (track.rows[0], track.cols[0]) == (0, 1)

    def test_multi_footprint_average(self):
        z = np.zeros((2, 80), np.float32)
        z[0, :] = 0.2
        z[1, :] = 0.4
        track = colocate(_curtain([0.0, 0.001], [0.0, 0.0], z=z),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert len(track) == 1
        np.testing.assert_allclose(track.targets[0, 0], 0.3, atol=1e-6)

    def test_sentinel_cells_skipped_in_average(self):
        z = np.full((2, 80), SENTINEL, np.float32)
        z[0, :40] = 0.2
        z[1, :] = 0.6
        track = colocate(_curtain([0.0, 0.0], [0.0, 0.0], z=z),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        np.testing.assert_allclose(track.targets[0, 0, :40], 0.4, atol=1e-6)
        np.testing.assert_allclose(track.targets[0, 0, 40:], 0.6, atol=1e-6)

    def test_all_sentinel_level_stays_sentinel(self):
        z = np.full((2, 80), SENTINEL, np.float32)
        track = colocate(_curtain([0.0, 0.0], [0.0, 0.0], z=z),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert (track.targets[0, 0] == SENTINEL).all()

    def test_type_majority(self):
        track = colocate(_curtain([0.0] * 3, [0.0] * 3, types=[1, 2, 2]),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert track.types[0] == 2

    def test_type_tie_goes_to_latest(self):
        track = colocate(_curtain([0.0] * 4, [0.0] * 4, types=[2, 1, 2, 1]),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert track.types[0] == 1
        track = colocate(_curtain([0.0] * 4, [0.0] * 4, types=[1, 2, 1, 2]),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert track.types[0] == 2

    def test_outside_footprints_skipped_with_counter(self):
        track = colocate(_curtain([0.0, 50.0, 1.0], [0.0, 0.0, 1.0]),
                         np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert track.n_skipped == 1
        assert len(track) == 2

    def test_idempotent(self):
        scene = generate_scene(5, "general", size=64)
        curtain = sample_track(scene, TrackSpec((2.0, 2.0), (60.0, 55.0)))
        a = colocate(curtain, scene.lat, scene.lon)
        b = colocate(curtain, scene.lat, scene.lon)
        np.testing.assert_array_equal(a.targets, b.targets)
        np.testing.assert_array_equal(a.rows, b.rows)
        np.testing.assert_array_equal(a.types, b.types)

    def test_single_footprint_roundtrip_exact(self):
        # footprints land on distinct pixels, so colocated targets must
        # equal the normalized scene volume at those pixels bit for bit
        scene = generate_scene(6, "general", size=64)
        r = 11
        curtain = sample_track(scene, TrackSpec((float(r), 0.0), (float(r), 63.0)))
        track = colocate(curtain, scene.lat, scene.lon)
        assert len(track) == 64
        assert track.n_skipped == 0
        np.testing.assert_array_equal(track.rows, np.full(64, r))
        spec = NORMALIZATION["z"]
        expected = normalize(scene.z[r], spec).astype(np.float32)
        np.testing.assert_array_equal(track.targets[:, 0, :], expected[track.cols])


class TestExtractPatch:

    def _scene_and_track(self, size=64):
        scene = generate_scene(7, "general", size=size)
        curtain = sample_track(scene, TrackSpec((2.0, 2.0), (size - 3.0, size - 6.0)))
        return scene, colocate(curtain, scene.lat, scene.lon)

    def test_mask_marks_exactly_track_pixels(self):
        scene, track = self._scene_and_track()
        from cloudvol.synth import normalize_imagery, render_imagery
        imagery = normalize_imagery(render_imagery(scene))
        center = clamp_center(track_midpoint(track), 32, 64, 64)
        sample = extract_patch(imagery, scene, track, center, 32, "s1")
        mask = sample.track_mask()
        assert mask.sum() == sample.n_track
        assert mask[sample.track_rows, sample.track_cols].all()
        # every kept pixel is one of the original track pixels, shifted
        orig = set(zip(track.rows.tolist(), track.cols.tolist()))
        r0 = center[0] - 16
        c0 = center[1] - 16
        for rr, cc in zip(sample.track_rows, sample.track_cols):
            assert (rr + r0, cc + c0) in orig

    def test_window_must_fit(self):
        scene, track = self._scene_and_track()
        from cloudvol.synth import normalize_imagery, render_imagery
        imagery = normalize_imagery(render_imagery(scene))
        with pytest.raises(ValueError, match="window|image"):
            extract_patch(imagery, scene, track, (2, 2), 32, "s2")

    def test_window_needs_a_track_pixel(self):
        scene, track = self._scene_and_track()
        from cloudvol.synth import normalize_imagery, render_imagery
        imagery = normalize_imagery(render_imagery(scene))
        # a corner window far from the diagonal track
        empty = np.zeros((64, 64, 11), np.float32)
        track_far = type(track)(rows=np.array([60]), cols=np.array([2]),
                                targets=track.targets[:1], types=track.types[:1])
        with pytest.raises(ValueError, match="track"):
            extract_patch(empty, scene, track_far, (16, 48), 16, "s3")

    def test_patch_metadata_slices_scene(self):
        scene, track = self._scene_and_track()
        from cloudvol.synth import normalize_imagery, render_imagery
        imagery = normalize_imagery(render_imagery(scene))
        center = clamp_center(track_midpoint(track), 32, 64, 64)
        sample = extract_patch(imagery, scene, track, center, 32, "s4")
        r0, c0 = center[0] - 16, center[1] - 16
        np.testing.assert_array_equal(sample.patch.lat, scene.lat[r0:r0 + 32])
        np.testing.assert_array_equal(sample.patch.values,
                                      imagery[r0:r0 + 32, c0:c0 + 32])
        assert sample.patch.timestamp == scene.timestamp

    def test_clamp_center(self):
        assert clamp_center((5, 100), 64, 256, 256) == (32, 100)
        assert clamp_center((250, 128), 64, 256, 256) == (224, 128)
        assert clamp_center((128, 128), 64, 256, 256) == (128, 128)


def _toy_sample(z_columns, side=8):
    """Sample whose track targets have the given per-column normalized z."""
    t = len(z_columns)
    targets = np.full((t, 3, 80), -1.0, np.float32)
    targets[:, 0, :] = np.asarray(z_columns, np.float32)[:, None]
    patch = SpectralPatch(values=np.zeros((side, side, 11), np.float32),
                          lat=np.arange(side, dtype=float),
                          lon=np.arange(side, dtype=float),
                          timestamp=_ts(15), solar_zenith=10.0,
                          solar_azimuth=10.0, sat_zenith=10.0, sat_azimuth=10.0,
                          satellite_id="SYNTH")
    return Sample(sample_id="toy", patch=patch,
                  track_rows=np.arange(t), track_cols=np.arange(t),
                  targets=targets, column_types=np.zeros(t, np.uint8))


class TestCloudyFilter:

    def test_fraction_counts_cloudy_columns(self):
        cloudy_norm = normalize(-20.0, NORMALIZATION["z"])
        clear_norm = -1.0
        sample = _toy_sample([cloudy_norm, clear_norm, clear_norm, clear_norm])
        assert cloudy_fraction(sample) == pytest.approx(0.25)

    def test_keep_at_threshold(self):
        cloudy_norm = normalize(-20.0, NORMALIZATION["z"])
        sample = _toy_sample([cloudy_norm, -1.0, -1.0, -1.0])
        assert cloudy_fraction_filter(sample)

    def test_reject_below_threshold(self):
        cloudy_norm = normalize(-20.0, NORMALIZATION["z"])
        sample = _toy_sample([cloudy_norm] + [-1.0] * 4)  # 20% cloudy
        assert not cloudy_fraction_filter(sample)


class TestPersistence:

    def test_sample_roundtrip(self, tmp_path):
        scene = generate_scene(8, "general", size=64)
        from cloudvol.synth import normalize_imagery, render_imagery
        imagery = normalize_imagery(render_imagery(scene))
        curtain = sample_track(scene, TrackSpec((1.0, 1.0), (60.0, 60.0)))
        track = colocate(curtain, scene.lat, scene.lon)
        center = clamp_center(track_midpoint(track), 48, 64, 64)
        sample = extract_patch(imagery, scene, track, center, 48, "rt-1", kind="general")
        save_sample(sample, tmp_path / "rt-1")
        loaded = load_sample(tmp_path / "rt-1")
        assert loaded.sample_id == sample.sample_id
        assert loaded.split == sample.split
        np.testing.assert_array_equal(loaded.patch.values, sample.patch.values)
        np.testing.assert_array_equal(loaded.targets, sample.targets)
        np.testing.assert_array_equal(loaded.track_rows, sample.track_rows)
        np.testing.assert_array_equal(loaded.column_types, sample.column_types)
        assert loaded.patch.solar_zenith == sample.patch.solar_zenith


@pytest.fixture(scope="module")
def built(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    cfg = GenerateConfig(out_dir=str(out), n_scenes=4, seed=1,
                         storm_fraction=0.25, scene_size=96,
                         patch_side=48, tracks_per_scene=2)
    manifest = generate_dataset(cfg)
    return out, cfg, manifest


class TestGeneratePipeline:

    def test_manifest_lists_both_roles(self, built):
        out, cfg, manifest = built
        pre = pretrain_records(manifest)
        ft = finetune_records(manifest)
        assert len(pre) == cfg.n_scenes
        assert 1 <= len(ft) <= cfg.n_scenes * cfg.tracks_per_scene
        assert len(manifest.samples) == len(pre) + len(ft)

    def test_bundles_load(self, built):
        out, _, manifest = built
        patch = load_patch(out / pretrain_records(manifest)[0].path)
        assert patch.values.shape == (96, 96, 11)
        sample = load_sample(out / finetune_records(manifest)[0].path)
        assert sample.patch.values.shape == (48, 48, 11)
        assert sample.targets.shape[1:] == (3, 80)

    def test_storms_are_test_split(self, built):
        _, _, manifest = built
        storms = [r for r in manifest.samples if r.kind == "storm"]
        assert storms
        assert all(r.split == "test" for r in storms)

    def test_splits_follow_day_rule(self, built):
        _, _, manifest = built
        for rec in manifest.samples:
            assert rec.split == assign_split(rec.timestamp)

    def test_no_shared_days_across_splits(self, built):
        _, _, manifest = built
        days = {}
        for rec in manifest.samples:
            d = datetime.datetime.fromtimestamp(
                rec.timestamp, tz=datetime.timezone.utc).day
            days.setdefault(rec.split, set()).add(d)
        for a in ("val", "test"):
            assert not (days.get("train", set()) & days.get(a, set()))

    def test_deterministic_manifest(self, built, tmp_path):
        out, cfg, _ = built
        cfg2 = GenerateConfig(**{**cfg.__dict__, "out_dir": str(tmp_path / "ds2")})
        generate_dataset(cfg2)
        a = (out / "manifest.json").read_text()
        b = (tmp_path / "ds2" / "manifest.json").read_text()
        assert a == b

    def test_kept_samples_meet_cloudy_floor(self, built):
        out, cfg, manifest = built
        for rec in finetune_records(manifest):
            assert rec.cloudy_fraction >= cfg.min_cloudy_fraction

    def test_zero_scenes_warns(self, tmp_path, caplog):
        import logging
        with caplog.at_level(logging.WARNING, logger="cloudvol.dataset"):
            manifest = generate_dataset(GenerateConfig(out_dir=str(tmp_path / "e"),
                                                       n_scenes=0))
        assert manifest.samples == []
        assert any("zero scenes" in r.message for r in caplog.records)
        assert DatasetManifest.load(tmp_path / "e" / "manifest.json").samples == []
