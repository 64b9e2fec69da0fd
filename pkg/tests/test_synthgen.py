"""Tests for the procedural scene generator, forward imaging, and tracks."""

import dataclasses
import datetime

import numpy as np
import pytest

from cloudvol.data.normalization import NORMALIZATION, denormalize
from cloudvol.data.structures import column_cloud_type
from cloudvol.synth import (CHANNEL_KINDS, CHANNEL_TABLE, HEIGHTS_KM,
                            N_CHANNELS, TrackSpec, WEIGHTS, generate_scene,
                            normalize_imagery, render_imagery, sample_track)
from cloudvol.synth.imaging import _BACKGROUND, _RE_SENSITIVE_CHANNEL
from cloudvol.synth.scene import (CLEAR_IWC, CLEAR_RE, CLEAR_Z, PIXEL_DEG,
                                  Z_IWC_COEF, Z_OFFSET_DB, Z_RE_COEF,
                                  Z_RE_REF_UM)
from cloudvol.synth.track import FOOTPRINT_SECONDS


@pytest.fixture(scope="module")
def general_scene():
    return generate_scene(3, "general", size=96)


@pytest.fixture(scope="module")
def storm_scene():
    return generate_scene(0, "storm", size=96)


class TestHeightGrid:

    def test_retained_levels(self):
        assert HEIGHTS_KM.shape == (80,)
        np.testing.assert_allclose(HEIGHTS_KM[0], 18.0, rtol=1e-12)
        np.testing.assert_allclose(HEIGHTS_KM[-1], 2.2, rtol=1e-12)

    def test_descending_uniform_spacing(self):
        np.testing.assert_allclose(np.diff(HEIGHTS_KM), -0.2, rtol=1e-9)

    def test_channel_weights_peak_at_center(self):
        assert WEIGHTS.shape == (80, N_CHANNELS)
        for c, (center, _, _, _) in enumerate(CHANNEL_TABLE):
            peak_h = HEIGHTS_KM[np.argmax(WEIGHTS[:, c])]
            assert abs(peak_h - center) <= 0.1 + 1e-9


class TestSceneDeterminism:

    def test_same_seed_bit_identical(self):
        a = generate_scene(11, "general", size=48)
        b = generate_scene(11, "general", size=48)
        assert a.timestamp == b.timestamp
        for field in ("z", "iwc", "re", "cloud_class", "lat", "lon"):
            np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
        assert (a.solar_zenith, a.sat_azimuth) == (b.solar_zenith, b.sat_azimuth)

    def test_distinct_seeds_differ(self):
        a = generate_scene(1, "general", size=48)
        b = generate_scene(2, "general", size=48)
        assert not np.array_equal(a.iwc, b.iwc)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            generate_scene(0, "cyclone")


class TestSceneFields:

    def test_shapes_and_dtypes(self, general_scene):
        s = general_scene
        assert s.z.shape == s.iwc.shape == s.re.shape == (96, 96, 80)
        assert s.cloud_class.shape == (96, 96, 80)
        assert s.z.dtype == np.float32
        assert s.cloud_class.dtype == np.uint8
        assert s.lat.shape == (96,) and s.lon.shape == (96,)

    def test_values_physical_and_finite(self, general_scene):
        s = general_scene
        for name, arr in (("z", s.z), ("iwc", s.iwc), ("re", s.re)):
            assert np.isfinite(arr).all()
            spec = NORMALIZATION[name]
            assert arr.min() >= spec.vmin - 1e-6 or name == "re"
            assert arr.max() <= spec.vmax + 1e-6
        assert s.re.min() >= 0.0
        assert s.cloud_class.max() <= 8

    def test_clear_voxels_hold_minima(self, general_scene):
        s = general_scene
        clear = s.re == CLEAR_RE
        assert clear.any() and not clear.all()
        np.testing.assert_array_equal(s.iwc[clear], np.float32(CLEAR_IWC))
        np.testing.assert_array_equal(s.z[clear], np.float32(CLEAR_Z))
        assert (s.cloud_class[clear] == 0).all()

    def test_cloudy_voxels_above_minima(self, general_scene):
        s = general_scene
        cloudy = s.re > 0
        assert cloudy.any()
        assert s.iwc[cloudy].min() > CLEAR_IWC
        assert s.re[cloudy].min() >= 5.0
        assert (s.cloud_class[cloudy] > 0).all()

    def test_reflectivity_tracks_mass_and_size(self, general_scene):
        # in-cloud dBZ should sit near the coupling law; residual is the
        # bounded generation noise plus rare clamping at the dBZ floor
        s = general_scene
        cloudy = s.re > 0
        iwc = s.iwc[cloudy].astype(np.float64)
        re = s.re[cloudy].astype(np.float64)
        expected = (Z_IWC_COEF * np.log10(iwc)
                    + Z_RE_COEF * np.log10(re / Z_RE_REF_UM) + Z_OFFSET_DB)
        inside = (expected > -27.0) & (expected < 17.0)
        resid = s.z[cloudy].astype(np.float64)[inside] - expected[inside]
        assert np.abs(resid).max() < 7.0
        assert abs(resid.mean()) < 0.15
        assert 0.9 < resid.std() < 1.5

    def test_geometry_ranges(self, general_scene):
        s = general_scene
        assert np.all(np.abs(s.lat) < 85.0)
        np.testing.assert_allclose(np.diff(s.lat), PIXEL_DEG, rtol=1e-9)
        np.testing.assert_allclose(np.diff(s.lon), PIXEL_DEG, rtol=1e-9)
        assert 0.0 <= s.solar_zenith <= 180.0
        assert 0.0 <= s.solar_azimuth < 360.0
        assert 0.0 <= s.sat_zenith <= 80.0
        assert 0.0 <= s.sat_azimuth < 360.0

    def test_timestamp_inside_2021(self, general_scene):
        t0 = datetime.datetime(2021, 1, 1, tzinfo=datetime.timezone.utc).timestamp()
        t1 = datetime.datetime(2022, 1, 1, tzinfo=datetime.timezone.utc).timestamp()
        assert t0 <= general_scene.timestamp < t1


class TestCloudTypeCoverage:

    def test_all_nine_labels_reachable(self, storm_scene):
        seen = set(np.unique(storm_scene.cloud_class).tolist())
        for seed in range(10):
            s = generate_scene(seed, "general", size=96)
            seen |= set(np.unique(s.cloud_class).tolist())
        assert seen == set(range(9))

    def test_column_majority_labels(self, general_scene):
        s = general_scene
        flat = s.cloud_class.reshape(-1, 80)
        types = {column_cloud_type(flat[i]) for i in range(0, flat.shape[0], 11)}
        assert 0 in types and len(types) >= 4


class TestStormScenes:

    def test_lands_on_late_month_days(self):
        for seed in range(6):
            s = generate_scene(seed, "storm", size=32)
            day = datetime.datetime.fromtimestamp(
                s.timestamp, tz=datetime.timezone.utc).day
            assert day in (28, 29, 30, 31)

    def test_vortex_is_overcast(self, storm_scene):
        s = storm_scene
        h, w = s.shape
        cloudy = (s.cloud_class > 0).any(axis=2)
        yy, xx = np.mgrid[0:h, 0:w]
        r = np.hypot(yy - (h - 1) / 2.0, xx - (w - 1) / 2.0)
        vortex = r <= 0.38 * min(h, w)
        assert cloudy[vortex].mean() >= 0.6
        assert s.column_cloudy_fraction() >= 0.5

    def test_core_is_deep_convection(self, storm_scene):
        s = storm_scene
        flat = s.cloud_class.reshape(-1, 80)
        n_dc = sum(column_cloud_type(flat[i]) == 8 for i in range(0, flat.shape[0], 7))
        assert n_dc > 0


class TestForwardImaging:

    def test_shape_and_determinism(self, general_scene):
        a = render_imagery(general_scene)
        b = render_imagery(general_scene)
        assert a.shape == (96, 96, N_CHANNELS)
        np.testing.assert_array_equal(a, b)

    def test_channel_kinds_partition(self):
        assert CHANNEL_KINDS.count("reflectance") == 3
        assert CHANNEL_KINDS.count("bt") == 8

    def test_values_inside_physical_ranges(self, general_scene):
        img = render_imagery(general_scene)
        for c in range(N_CHANNELS):
            spec = NORMALIZATION[CHANNEL_KINDS[c]]
            assert img[:, :, c].min() >= spec.vmin
            assert img[:, :, c].max() <= spec.vmax

    def test_empty_volume_renders_backgrounds(self, general_scene):
        s = dataclasses.replace(
            general_scene,
            iwc=np.zeros_like(general_scene.iwc),
            re=np.zeros_like(general_scene.re))
        img = render_imagery(s, noise_refl=0.0, noise_bt=0.0)
        for c in range(N_CHANNELS):
            np.testing.assert_allclose(img[:, :, c], _BACKGROUND[c], atol=1e-9)

    def test_monotone_in_column_mass(self, general_scene):
        # doubling the mass field must brighten reflectances and cannot warm
        # the window channels whose clear background is the surface itself
        s1 = general_scene
        s2 = dataclasses.replace(s1, iwc=(s1.iwc * 2.0).astype(np.float32))
        a = render_imagery(s1, noise_refl=0.0, noise_bt=0.0)
        b = render_imagery(s2, noise_refl=0.0, noise_bt=0.0)
        for c in range(N_CHANNELS):
            if CHANNEL_KINDS[c] == "reflectance":
                assert (b[:, :, c] >= a[:, :, c] - 1e-9).all()
            elif _BACKGROUND[c] == 290.0:
                assert (b[:, :, c] <= a[:, :, c] + 1e-9).all()

    def test_larger_particles_darken_swir_only(self, general_scene):
        s1 = general_scene
        bigger = np.where(s1.re > 0, np.minimum(s1.re * 1.5, 160.0), 0.0)
        s2 = dataclasses.replace(s1, re=bigger.astype(np.float32))
        a = render_imagery(s1, noise_refl=0.0, noise_bt=0.0)
        b = render_imagery(s2, noise_refl=0.0, noise_bt=0.0)
        c = _RE_SENSITIVE_CHANNEL
        assert (b[:, :, c] <= a[:, :, c] + 1e-9).all()
        assert b[:, :, c].sum() < a[:, :, c].sum()
        for other in range(N_CHANNELS):
            if other != c:
                np.testing.assert_array_equal(b[:, :, other], a[:, :, other])

    def test_normalize_imagery_bounded(self, general_scene):
        img = render_imagery(general_scene)
        norm = normalize_imagery(img)
        assert norm.dtype == np.float32
        assert norm.min() >= -1.0 and norm.max() <= 1.0
        # spot-check one reflectance and one thermal pixel
        spec_r = NORMALIZATION["reflectance"]
        np.testing.assert_allclose(
            denormalize(norm[0, 0, 0], spec_r), img[0, 0, 0], atol=1e-4)


class TestTrackSampling:

    def test_horizontal_track_matches_volume_row(self, general_scene):
        s = general_scene
        r, w = 17, s.shape[1]
        curtain = sample_track(s, TrackSpec(entry=(r, 0.0), exit=(r, w - 1.0)))
        assert curtain.z.shape == (w, 80)
        spec = NORMALIZATION["z"]
        np.testing.assert_allclose(
            denormalize(curtain.z.astype(np.float64), spec),
            s.z[r].astype(np.float64), atol=2e-4)
        np.testing.assert_allclose(curtain.lat, np.full(w, s.lat[r]))
        np.testing.assert_allclose(curtain.lon, s.lon)

    def test_footprint_times_advance(self, general_scene):
        curtain = sample_track(general_scene, TrackSpec(entry=(0.0, 0.0), exit=(40.0, 40.0)))
        dt = np.diff(curtain.time)
        # epoch-scale floats carry ~1e-7 s of ulp noise in the differences
        np.testing.assert_allclose(dt, FOOTPRINT_SECONDS, atol=1e-5)
        assert curtain.time[0] == general_scene.timestamp

    def test_zero_length_track_rejected(self, general_scene):
        with pytest.raises(ValueError, match="zero length"):
            sample_track(general_scene, TrackSpec(entry=(5.0, 5.0), exit=(5.0, 5.5)))

    def test_out_of_bounds_track_rejected(self, general_scene):
        with pytest.raises(ValueError, match="bounds"):
            sample_track(general_scene, TrackSpec(entry=(0.0, 0.0), exit=(0.0, 400.0)))

    def test_clear_columns_label_no_cloud(self, general_scene):
        s = dataclasses.replace(
            general_scene, cloud_class=np.zeros_like(general_scene.cloud_class))
        curtain = sample_track(s, TrackSpec(entry=(2.0, 2.0), exit=(30.0, 60.0)))
        assert (curtain.cloud_type == 0).all()

    def test_curtain_values_normalized(self, general_scene):
        curtain = sample_track(general_scene, TrackSpec(entry=(0.0, 1.0), exit=(90.0, 90.0)))
        for arr in (curtain.z, curtain.iwc, curtain.re):
            assert arr.dtype == np.float32
            assert arr.min() >= -1.0 and arr.max() <= 1.0

    def test_random_edge_tracks_stay_inside(self):
        from cloudvol.synth import random_edge_track
        rng = np.random.default_rng(5)
        scene = generate_scene(4, "general", size=48)
        for _ in range(8):
            spec = random_edge_track(rng, 48)
            curtain = sample_track(scene, spec)
            assert curtain.z.shape[0] >= 40
