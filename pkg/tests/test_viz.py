"""PNM writers and the render helpers behind triptychs, curtains, and grids."""

import numpy as np
import pytest

from cloudvol.viz import (GAP_PX, curtain_strip, max_column_composite,
                          read_pnm, spatial_grid_image, to_gray, to_ramp,
                          triptych, write_pgm, write_ppm)


class TestPnmIO:
    def test_pgm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        gray = rng.integers(0, 256, size=(7, 13), dtype=np.uint8)
        path = write_pgm(tmp_path / "a.pgm", gray)
        assert path.read_bytes().startswith(b"P5\n13 7\n255\n")
        assert np.array_equal(read_pnm(path), gray)

    def test_ppm_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        rgb = rng.integers(0, 256, size=(5, 9, 3), dtype=np.uint8)
        path = write_ppm(tmp_path / "b.ppm", rgb)
        assert path.read_bytes().startswith(b"P6\n9 5\n255\n")
        assert np.array_equal(read_pnm(path), rgb)

    def test_pgm_rejects_bad_input(self, tmp_path):
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "x.pgm", np.zeros((4, 4)))
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "x.pgm", np.zeros((4, 4, 3), dtype=np.uint8))

    def test_ppm_rejects_bad_input(self, tmp_path):
        with pytest.raises(ValueError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            write_ppm(tmp_path / "x.ppm", np.zeros((4, 4, 4), dtype=np.uint8))

    def test_writers_create_parent_dirs(self, tmp_path):
        path = write_pgm(tmp_path / "deep" / "er" / "c.pgm",
                         np.zeros((2, 2), dtype=np.uint8))
        assert path.exists()


class TestScaling:
    def test_gray_endpoints(self):
        out = to_gray(np.array([-1.0, 0.0, 1.0]), -1.0, 1.0)
        assert out.tolist() == [0, 128, 255]

    def test_gray_clips_and_blanks_nan(self):
        out = to_gray(np.array([-9.0, 9.0, np.nan]), 0.0, 1.0)
        assert out.tolist() == [0, 255, 0]

    def test_gray_rejects_empty_range(self):
        with pytest.raises(ValueError):
            to_gray(np.zeros(3), 1.0, 1.0)

    def test_ramp_endpoints_and_midpoint(self):
        out = to_ramp(np.array([0.0, 0.5, 1.0]), 0.0, 1.0)
        assert out.shape == (3, 3) and out.dtype == np.uint8
        assert out[0].tolist() == [40, 60, 150]
        assert out[1].tolist() == [245, 245, 245]
        assert out[2].tolist() == [170, 30, 40]

    def test_ramp_nan_is_black(self):
        out = to_ramp(np.array([[np.nan, 1.0]]), 0.0, 1.0)
        assert out[0, 0].tolist() == [0, 0, 0]
        assert out[0, 1].tolist() != [0, 0, 0]


class TestTriptych:
    def _panels(self, img):
        p = (img.shape[1] - 2 * GAP_PX) // 3
        return img[:, :p], img[:, p + GAP_PX:2 * p + GAP_PX], img[:, 2 * (p + GAP_PX):]

    def test_layout_and_panels(self):
        rng = np.random.default_rng(2)
        orig = rng.uniform(-1, 1, size=(8, 8, 11))
        recon = rng.uniform(-1, 1, size=(8, 8, 11))
        masked = np.zeros((8, 8), dtype=bool)
        masked[:4] = True
        img = triptych(orig, masked, recon)
        assert img.shape == (8, 3 * 8 + 2 * GAP_PX, 3)
        left, mid, right = self._panels(img)
        assert np.array_equal(right, to_gray(orig[:, :, :3], -1.0, 1.0))
        assert np.array_equal(mid, to_gray(recon[:, :, :3], -1.0, 1.0))
        # masked pixels blank to mid-gray, the rest match the original
        assert (left[:4] == 128).all()
        assert np.array_equal(left[4:], right[4:])

    def test_gaps_are_black(self):
        orig = np.zeros((4, 4, 11))
        img = triptych(orig, np.zeros((4, 4), dtype=bool), orig)
        assert (img[:, 4:4 + GAP_PX] == 0).all()

    def test_input_not_mutated(self):
        orig = np.ones((4, 4, 11))
        masked = np.ones((4, 4), dtype=bool)
        triptych(orig, masked, orig)
        assert (orig == 1.0).all()


class TestCurtain:
    def test_identical_halves_when_pred_equals_target(self):
        rng = np.random.default_rng(3)
        track = rng.uniform(-30.0, 20.0, size=(12, 80))
        img = curtain_strip(track, track, -35.0, 25.0)
        assert img.shape == (2 * 80 + GAP_PX, 12, 3)
        top, bottom = img[:80], img[80 + GAP_PX:]
        assert np.abs(top.astype(int) - bottom.astype(int)).max() == 0
        assert (img[80:80 + GAP_PX] == 0).all()

    def test_height_runs_down_the_strip(self):
        # level 0 is the top of the atmosphere so it must be the top row
        pred = np.full((6, 80), 0.0)
        pred[:, 0] = 1.0
        img = curtain_strip(pred, pred, 0.0, 1.0)
        assert (img[0] == [170, 30, 40]).all()

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            curtain_strip(np.zeros((4, 80)), np.zeros((5, 80)), 0.0, 1.0)


class TestComposite:
    def test_max_over_height(self):
        vol = np.zeros((2, 2, 5))
        vol[0, 0, 3] = 1.0
        vol[1, 1, :] = 0.5
        img = max_column_composite(vol, 0.0, 1.0)
        assert np.array_equal(img, to_ramp(vol.max(axis=2), 0.0, 1.0))
        assert img[0, 0].tolist() == [170, 30, 40]

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            max_column_composite(np.zeros((4, 4)), 0.0, 1.0)


class TestSpatialGrid:
    def test_scaled_to_occupied_range(self):
        dense = np.array([[1.0, np.nan, 3.0], [2.0, 2.0, np.nan]])
        img = spatial_grid_image(dense)
        assert img.tolist() == [[0, 0, 255], [128, 128, 0]]

    def test_all_nan_is_blank(self):
        img = spatial_grid_image(np.full((3, 2), np.nan))
        assert img.shape == (3, 2) and (img == 0).all()

    def test_constant_grid(self):
        img = spatial_grid_image(np.full((2, 2), 7.0))
        assert (img == 0).all()
