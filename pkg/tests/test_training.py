"""Loss masking, batch assembly, checkpointing, and loop behavior."""

import json

import numpy as np
import pytest

from cloudvol.data.manifest import SampleRecord
from cloudvol.data.normalization import SENTINEL
from cloudvol.data.structures import Sample, SpectralPatch
from cloudvol.dataset import GenerateConfig, generate_dataset
from cloudvol.models import SwinConvModel, SwinMAE, UNet, UNetConfig, desk_swin_config
from cloudvol.tensor.core import Tensor
from cloudvol.training import (PatchCache, TrainConfig, TrainingAborted,
                               config_hash, finetune_batches, finetune_config,
                               load_checkpoint, load_for_finetune,
                               masked_mse_loss, pretrain_batches,
                               pretrain_config, rebuild_model, train)
from cloudvol.training import loss as loss_mod


def _loss_case(v=1, b=1, p=4, track=((1, 1), (2, 3)), seed=0):
    """Small dense target tensor with a hand-placed track."""
    rng = np.random.default_rng(seed)
    targets = np.full((b, p, p, v, 80), SENTINEL, dtype=np.float32)
    mask = np.zeros((b, p, p), dtype=bool)
    for r, c in track:
        mask[:, r, c] = True
        targets[:, r, c] = rng.uniform(-1, 1, (b, v, 80)).astype(np.float32)
    return targets, mask


class TestMaskedLoss:
    def test_perfect_prediction_is_zero(self):
        targets, mask = _loss_case()
        pred = np.where(targets == SENTINEL, 0.25, targets)
        loss = masked_mse_loss(Tensor(pred.reshape(1, 4, 4, 80)), targets, mask)
        assert float(loss.data) == 0.0

    @pytest.mark.parametrize("track", [((1, 1),), ((1, 1), (2, 3), (0, 0))])
    def test_offset_one_gives_one_per_variable(self, track):
        for v in (1, 3):
            targets, mask = _loss_case(v=v, track=track)
            pred = (targets + 1.0).reshape(1, 4, 4, v * 80)
            loss = masked_mse_loss(Tensor(pred), targets, mask)
            assert float(loss.data) == pytest.approx(v * 1.0, rel=1e-6)

    def test_all_false_mask_is_zero_with_warning_count(self):
        targets, mask = _loss_case(v=3)
        mask[:] = False
        before = loss_mod.empty_loss_count
        loss = masked_mse_loss(Tensor(np.zeros((1, 4, 4, 240), np.float32)),
                               targets, mask)
        assert float(loss.data) == 0.0
        assert loss_mod.empty_loss_count == before + 3

    def test_sentinel_targets_excluded_under_mask(self):
        targets, mask = _loss_case(track=((1, 1), (2, 2)))
        targets[:, 2, 2, :, :40] = SENTINEL  # half of one column invalid
        pred = np.where(targets == SENTINEL, 9.0, targets + 1.0)
        loss = masked_mse_loss(Tensor(pred.reshape(1, 4, 4, 80)), targets, mask)
        assert float(loss.data) == pytest.approx(1.0, rel=1e-6)

    def test_off_track_perturbation_changes_nothing(self):
        targets, mask = _loss_case(seed=3)
        rng = np.random.default_rng(4)
        pred = rng.uniform(-1, 1, (1, 4, 4, 80)).astype(np.float32)
        base = float(masked_mse_loss(Tensor(pred.copy()), targets, mask).data)
        perturbed = pred.copy()
        perturbed[:, ~mask[0]] += rng.uniform(-50, 50, (1, int((~mask[0]).sum()), 80)).astype(np.float32)
        after = float(masked_mse_loss(Tensor(perturbed), targets, mask).data)
        assert after == base

    def test_off_track_gradient_exactly_zero(self):
        targets, mask = _loss_case(v=3, seed=5)
        pred = Tensor(np.random.default_rng(6).uniform(-1, 1, (1, 4, 4, 240)).astype(np.float32),
                      requires_grad=True)
        masked_mse_loss(pred, targets, mask).backward()
        grad = pred.grad.reshape(1, 4, 4, 3, 80)
        assert (grad[:, ~mask[0]] == 0.0).all()
        assert np.abs(grad[:, mask[0]]).sum() > 0

    def test_multivariable_equals_sum_of_singles(self):
        targets, mask = _loss_case(v=3, track=((0, 1), (3, 3)), seed=7)
        pred = np.random.default_rng(8).uniform(-1, 1, (1, 4, 4, 3, 80)).astype(np.float32)
        joint = float(masked_mse_loss(Tensor(pred.reshape(1, 4, 4, 240)),
                                      targets, mask).data)
        singles = sum(
            float(masked_mse_loss(Tensor(pred[:, :, :, v].reshape(1, 4, 4, 80)),
                                  targets[:, :, :, [v]], mask).data)
            for v in range(3))
        assert joint == pytest.approx(singles, rel=1e-6)


def _record(i, sat="SYNTH", split="train"):
    return SampleRecord(sample_id=f"s{i}", path=f"finetune/s{i}",
                        satellite_id=sat, timestamp=1_609_459_200 + i,
                        split=split, cloudy_fraction=0.5)


def _toy_sample(i, side=8, sat="SYNTH"):
    rng = np.random.default_rng(i)
    patch = SpectralPatch(
        values=rng.uniform(-1, 1, (side, side, 11)).astype(np.float32),
        lat=np.linspace(0, 1, side), lon=np.linspace(10, 11, side),
        timestamp=1_609_459_200, solar_zenith=50.0, solar_azimuth=120.0,
        sat_zenith=10.0, sat_azimuth=200.0, satellite_id=sat)
    return Sample(sample_id=f"s{i}", patch=patch,
                  track_rows=np.array([2, 3]), track_cols=np.array([1, 1]),
                  targets=rng.uniform(-1, 1, (2, 3, 80)).astype(np.float32),
                  column_types=np.array([1, 2], dtype=np.uint8))


def _stub_cache(samples):
    cache = PatchCache("/nonexistent")
    for s in samples:
        cache._samples[s.sample_id] = s
        cache._patches[s.sample_id] = s.patch
    return cache


class TestBatches:
    def test_batches_never_mix_satellites(self):
        sats = ["A", "A", "B", "B", "B", "C"]
        samples = [_toy_sample(i, sat=s) for i, s in enumerate(sats)]
        records = [_record(i, sat=s) for i, s in enumerate(sats)]
        cache = _stub_cache(samples)
        for epoch in range(3):
            for batch in finetune_batches(records, cache, 2, epoch, seed=1):
                ids = {s.patch.satellite_id for s in batch.samples}
                assert len(ids) == 1

    def test_every_record_appears_once_per_epoch(self):
        samples = [_toy_sample(i) for i in range(5)]
        records = [_record(i) for i in range(5)]
        cache = _stub_cache(samples)
        seen = []
        for batch in finetune_batches(records, cache, 2, 0, seed=2):
            seen += [s.sample_id for s in batch.samples]
        assert sorted(seen) == [f"s{i}" for i in range(5)]

    def test_same_seed_same_order(self):
        samples = [_toy_sample(i) for i in range(6)]
        records = [_record(i) for i in range(6)]
        cache = _stub_cache(samples)

        def order(seed, epoch):
            return [s.sample_id for b in
                    finetune_batches(records, cache, 2, epoch, seed=seed)
                    for s in b.samples]

        assert order(3, 0) == order(3, 0)
        assert order(3, 0) != order(3, 1) or order(3, 0) != order(4, 0)

    def test_empty_split_raises(self):
        with pytest.raises(ValueError, match="empty split"):
            list(finetune_batches([], _stub_cache([]), 2, 0, seed=0))

    def test_pretrain_crop_shapes_and_determinism(self):
        samples = [_toy_sample(i, side=16) for i in range(3)]
        records = [_record(i) for i in range(3)]
        cache = _stub_cache(samples)
        a = list(pretrain_batches(records, cache, 2, 8, epoch=1, seed=5))
        b = list(pretrain_batches(records, cache, 2, 8, epoch=1, seed=5))
        for ba, bb in zip(a, b):
            assert ba.x.shape[1:] == (8, 8, 11)
            assert (ba.x == bb.x).all()
            assert ba.meta.shape[1:] == (13,)

    def test_center_crop_when_not_shuffling(self):
        samples = [_toy_sample(0, side=16)]
        records = [_record(0)]
        cache = _stub_cache(samples)
        batch = next(pretrain_batches(records, cache, 1, 8, epoch=0, seed=0,
                                      shuffle=False))
        assert (batch.x[0] == samples[0].patch.values[4:12, 4:12]).all()

    def test_crop_larger_than_patch_rejected(self):
        samples = [_toy_sample(0, side=8)]
        cache = _stub_cache(samples)
        with pytest.raises(ValueError, match="smaller than crop"):
            list(pretrain_batches([_record(0)], cache, 1, 16, epoch=0, seed=0))


class TestTrainConfig:
    def test_phase_validated(self):
        with pytest.raises(ValueError):
            TrainConfig(phase="warmup", checkpoint_dir="/tmp/x", epochs=1,
                        batch_size=1)

    def test_positive_epochs_and_batch(self):
        for kw in ({"epochs": 0, "batch_size": 1}, {"epochs": 1, "batch_size": 0}):
            with pytest.raises(ValueError):
                TrainConfig(phase="finetune", checkpoint_dir="/tmp/x", **kw)

    def test_paper_defaults(self):
        p = pretrain_config("/tmp/a")
        assert (p.epochs, p.batch_size, p.weight_decay, p.lr) == (50, 32, 0.0, 1.5e-4)
        f = finetune_config("/tmp/b")
        assert (f.epochs, f.batch_size, f.weight_decay) == (100, 8, 0.0)
        fu = finetune_config("/tmp/c", model_kind="unet")
        assert fu.weight_decay == 1e-5


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("trainset")
    cfg = GenerateConfig(out_dir=root, n_scenes=4, seed=3, storm_fraction=0.25,
                         scene_size=96, patch_side=64, tracks_per_scene=2)
    return root, generate_dataset(cfg)


def _small_unet(seed=0):
    return UNet(UNetConfig(channels=(32, 64)), np.random.default_rng(seed))


class TestTrainLoop:
    def test_loss_decreases_and_log_schema(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        cfg = finetune_config(tmp_path / "ck", model_kind="unet", epochs=4,
                              batch_size=4, seed=1)
        res = train(_small_unet(1), UNetConfig(channels=(32, 64)), cfg, root,
                    manifest)
        assert res.log_rows[-1]["train_loss"] < res.log_rows[0]["train_loss"]
        text = res.log_path.read_text().splitlines()
        assert text[0] == "epoch,phase,train_loss,val_loss,rmse,psnr,wall_seconds"
        assert len(text) == 1 + cfg.epochs

    def test_checkpoint_keeps_best_epoch(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        cfg = finetune_config(tmp_path / "ck", model_kind="unet", epochs=4,
                              batch_size=4, seed=2)
        res = train(_small_unet(2), UNetConfig(channels=(32, 64)), cfg, root,
                    manifest)
        vals = [r["val_loss"] for r in res.log_rows]
        assert res.best_val_loss == min(vals)
        ck = load_checkpoint(tmp_path / "ck")
        assert ck.epoch == vals.index(min(vals))
        assert ck.best_val_loss == pytest.approx(min(vals))

    def test_two_runs_bit_identical(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset

        def run(tag):
            cfg = finetune_config(tmp_path / tag, model_kind="unet", epochs=2,
                                  batch_size=4, seed=7)
            res = train(_small_unet(7), UNetConfig(channels=(32, 64)), cfg,
                        root, manifest)
            return res, load_checkpoint(tmp_path / tag)

        res_a, ck_a = run("a")
        res_b, ck_b = run("b")
        assert [r["train_loss"] for r in res_a.log_rows] == \
               [r["train_loss"] for r in res_b.log_rows]
        assert ck_a.state.keys() == ck_b.state.keys()
        for k in ck_a.state:
            assert (ck_a.state[k] == ck_b.state[k]).all()

    def test_pretrain_and_finetune_restore(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        swin = desk_swin_config()
        mae = SwinMAE(swin, np.random.default_rng(4))
        cfg = pretrain_config(tmp_path / "mae", epochs=2, batch_size=4, seed=4)
        res = train(mae, swin, cfg, root, manifest)
        assert res.best_epoch >= 0

        ft = load_for_finetune(tmp_path / "mae", swin, np.random.default_rng(5))
        x = Tensor(np.random.default_rng(6).uniform(-1, 1, (1, 64, 64, 11)).astype(np.float32))
        restored = ft.encoder(x)[-1].data
        assert (restored == mae.encoder(x)[-1].data).all()

    def test_finetune_restore_rejects_wrong_config(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        swin = desk_swin_config()
        mae = SwinMAE(swin, np.random.default_rng(4))
        cfg = pretrain_config(tmp_path / "mae2", epochs=1, batch_size=4, seed=4)
        train(mae, swin, cfg, root, manifest)
        other = desk_swin_config(use_metadata=False)
        with pytest.raises(ValueError, match="hash"):
            load_for_finetune(tmp_path / "mae2", other, np.random.default_rng(0))

    def test_finetune_restore_rejects_finetune_checkpoint(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        cfg = finetune_config(tmp_path / "uck", model_kind="unet", epochs=1,
                              batch_size=4, seed=3)
        train(_small_unet(3), UNetConfig(channels=(32, 64)), cfg, root, manifest)
        with pytest.raises(ValueError, match="pre-training"):
            load_for_finetune(tmp_path / "uck", desk_swin_config(),
                              np.random.default_rng(0))

    def test_nonfinite_loss_aborts_with_batch_id(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        model = _small_unet(5)
        model.head.weight.data[:] = np.nan
        cfg = finetune_config(tmp_path / "bad", model_kind="unet", epochs=1,
                              batch_size=4, seed=5)
        with pytest.raises(TrainingAborted) as err:
            train(model, UNetConfig(channels=(32, 64)), cfg, root, manifest)
        assert err.value.batch_id == "epoch0/batch0"
        diag = json.loads((tmp_path / "bad" / "abort.json").read_text())
        assert diag["batch_id"] == "epoch0/batch0"

    def test_empty_training_split(self, tmp_path):
        from cloudvol.data.manifest import DatasetManifest
        cfg = finetune_config(tmp_path / "ck", epochs=1, batch_size=1)
        with pytest.raises(ValueError, match="empty split"):
            train(_small_unet(0), UNetConfig(channels=(32, 64)), cfg,
                  tmp_path, DatasetManifest())

    def test_overfit_single_sample(self, tiny_dataset, tmp_path):
        root, manifest = tiny_dataset
        from cloudvol.data.manifest import DatasetManifest
        from cloudvol.dataset import finetune_records
        rec = finetune_records(manifest)[0]
        one = DatasetManifest(samples=[SampleRecord(
            sample_id=rec.sample_id, path=rec.path, satellite_id=rec.satellite_id,
            timestamp=rec.timestamp, split="train",
            cloudy_fraction=rec.cloudy_fraction, kind=rec.kind)])
        cfg = finetune_config(tmp_path / "ov", model_kind="unet", epochs=40,
                              batch_size=1, seed=9)
        res = train(_small_unet(9), UNetConfig(channels=(32, 64)), cfg, root, one)
        losses = [r["train_loss"] for r in res.log_rows]
        assert losses[-1] < 0.5 * losses[0]


class TestCheckpointStore:
    def test_rebuild_roundtrip(self, tmp_path):
        from cloudvol.training import save_checkpoint
        model = _small_unet(11)
        save_checkpoint(tmp_path / "ck", model, UNetConfig(channels=(32, 64)),
                        epoch=3, best_val_loss=0.5)
        ck = load_checkpoint(tmp_path / "ck")
        clone = rebuild_model(ck, np.random.default_rng(12))
        x = Tensor(np.random.default_rng(13).uniform(-1, 1, (1, 8, 8, 11)).astype(np.float32))
        assert (clone(x).data == model(x).data).all()
        assert ck.epoch == 3 and ck.best_val_loss == 0.5

    def test_config_hash_stable_and_sensitive(self):
        a = desk_swin_config()
        assert config_hash(a) == config_hash(desk_swin_config())
        assert config_hash(a) != config_hash(desk_swin_config(use_metadata=False))

    def test_corrupted_parameter_file(self, tmp_path):
        from cloudvol.training import save_checkpoint
        model = _small_unet(14)
        save_checkpoint(tmp_path / "ck", model, UNetConfig(channels=(32, 64)),
                        epoch=0, best_val_loss=1.0)
        victim = sorted((tmp_path / "ck" / "params").iterdir())[0]
        victim.write_bytes(b"not a tensor")
        with pytest.raises(Exception):
            load_checkpoint(tmp_path / "ck")

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "nope")
