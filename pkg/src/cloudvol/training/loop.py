"""Epoch loop: seeded batching, strict-improvement checkpointing, CSV log."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..data.manifest import DatasetManifest
from ..dataset import finetune_records, pretrain_records
from ..metrics import psnr_from_mse
from ..models import mask_to_pixels
from ..tensor.adam import Adam
from ..tensor.core import Tensor, no_grad
from .batches import PatchCache, finetune_batches, pretrain_batches
from .checkpoint import save_checkpoint
from .loss import masked_mse_loss, select_variables, valid_cells

log = logging.getLogger(__name__)

PHASES = ("pretrain", "finetune")
LOG_COLUMNS = ("epoch", "phase", "train_loss", "val_loss", "rmse", "psnr",
               "wall_seconds")
NORM_RANGE = 2.0  # all fields live in [-1, 1]


class TrainingAborted(RuntimeError):
    def __init__(self, batch_id: str, loss_value: float):
        super().__init__(
            f"non-finite loss {loss_value!r} in batch {batch_id}")
        self.batch_id = batch_id


@dataclass
class TrainConfig:
    phase: str
    checkpoint_dir: Path
    epochs: int
    batch_size: int
    lr: float = 1.5e-4
    weight_decay: float = 0.0
    seed: int = 0
    crop_side: Optional[int] = None   # pretrain crop; defaults to model input
    log_path: Optional[Path] = None

    def __post_init__(self):
        if self.phase not in PHASES:
            raise ValueError(f"phase must be one of {PHASES}")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        self.checkpoint_dir = Path(self.checkpoint_dir)
        if self.log_path is None:
            self.log_path = self.checkpoint_dir / "train_log.csv"


def pretrain_config(checkpoint_dir, **overrides) -> TrainConfig:
    base = dict(phase="pretrain", checkpoint_dir=checkpoint_dir,
                epochs=50, batch_size=32, weight_decay=0.0)
    base.update(overrides)
    return TrainConfig(**base)


def finetune_config(checkpoint_dir, model_kind: str = "swin",
                    **overrides) -> TrainConfig:
    wd = 1e-5 if model_kind == "unet" else 0.0
    base = dict(phase="finetune", checkpoint_dir=checkpoint_dir,
                epochs=100, batch_size=8, weight_decay=wd)
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainResult:
    best_val_loss: float
    best_epoch: int
    checkpoint_dir: Path
    log_path: Path
    log_rows: List[Dict] = field(default_factory=list)


def _split_records(manifest: DatasetManifest, phase: str, split: str):
    pool = pretrain_records(manifest) if phase == "pretrain" else finetune_records(manifest)
    return [r for r in pool if r.split == split]


def _pretrain_step_loss(model, batch, mask) -> Tuple[Tensor, np.ndarray]:
    x = Tensor(batch.x)
    meta = Tensor(batch.meta) if model.uses_metadata else None
    return model.loss(x, meta, mask)


def _finetune_step_loss(model, batch) -> Tuple[Tensor, Tensor]:
    x = Tensor(batch.x)
    pred = model(x, Tensor(batch.meta)) if model.uses_metadata else model(x)
    targets = select_variables(batch.targets, model.variables)
    return masked_mse_loss(pred, targets, batch.mask), pred


def _validate(model, records, cache, cfg: TrainConfig,
              crop: int) -> Tuple[float, float, float]:
    """Mean validation loss plus RMSE/PSNR over the valid cells."""
    losses = []
    sq_sum, n_cells = 0.0, 0
    with no_grad():
        if cfg.phase == "pretrain":
            mask_rng = np.random.default_rng((cfg.seed, 7))
            for batch in pretrain_batches(records, cache, cfg.batch_size,
                                          crop, epoch=0, seed=cfg.seed,
                                          shuffle=False):
                mask = model.sample_mask(mask_rng)
                loss, recon = _pretrain_step_loss(model, batch, mask)
                losses.append(float(loss.data))
                px = mask_to_pixels(mask, model.config.token_size)
                d = recon.data[:, px, :] - batch.x[:, px, :]
                sq_sum += float((d.astype(np.float64) ** 2).sum())
                n_cells += d.size
        else:
            for batch in finetune_batches(records, cache, cfg.batch_size,
                                          epoch=0, seed=cfg.seed,
                                          shuffle=False):
                loss, pred = _finetune_step_loss(model, batch)
                losses.append(float(loss.data))
                targets = select_variables(batch.targets, model.variables)
                valid = valid_cells(targets, batch.mask)
                shp = targets.shape
                p = pred.data.reshape(shp).astype(np.float64)
                d = np.where(valid, p - targets, 0.0)
                sq_sum += float((d ** 2).sum())
                n_cells += int(valid.sum())
    mse = sq_sum / max(n_cells, 1)
    return (float(np.mean(losses)), math.sqrt(mse),
            psnr_from_mse(mse, NORM_RANGE))


def _write_log(path: Path, rows: List[Dict]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


def _dump_abort(cfg: TrainConfig, epoch: int, batch_id: str, value: float):
    cfg.checkpoint_dir.mkdir(parents=True, exist_ok=True)
    diag = {"epoch": epoch, "batch_id": batch_id, "loss": repr(value)}
    (cfg.checkpoint_dir / "abort.json").write_text(json.dumps(diag, indent=1))


def train(model, model_config, cfg: TrainConfig, root,
          manifest: DatasetManifest) -> TrainResult:
    """Run the configured phase; checkpoint on strict val-loss improvement."""
    train_recs = _split_records(manifest, cfg.phase, "train")
    if not train_recs:
        raise ValueError("empty split: no training records")
    val_recs = _split_records(manifest, cfg.phase, "val")
    if not val_recs:
        log.warning("validation split empty; validating on the training split")
        val_recs = train_recs

    crop = cfg.crop_side
    if crop is None:
        crop = getattr(model_config, "image_size", None) or 64

    cache = PatchCache(root)
    opt = Adam(dict(model.named_parameters()), lr=cfg.lr,
               weight_decay=cfg.weight_decay)

    best_val = math.inf
    best_epoch = -1
    rows: List[Dict] = []
    for epoch in range(cfg.epochs):
        t0 = time.time()
        losses = []
        if cfg.phase == "pretrain":
            mask_rng = np.random.default_rng((cfg.seed, 3, epoch))
            batches = pretrain_batches(train_recs, cache, cfg.batch_size,
                                       crop, epoch, cfg.seed, shuffle=True)
        else:
            batches = finetune_batches(train_recs, cache, cfg.batch_size,
                                       epoch, cfg.seed, shuffle=True)
        for batch in batches:
            if cfg.phase == "pretrain":
                loss, _ = _pretrain_step_loss(model, batch,
                                              model.sample_mask(mask_rng))
            else:
                loss, _ = _finetune_step_loss(model, batch)
            value = float(loss.data)
            if not math.isfinite(value):
                _dump_abort(cfg, epoch, batch.batch_id, value)
                raise TrainingAborted(batch.batch_id, value)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)

        val_loss, rmse, psnr_db = _validate(model, val_recs, cache, cfg, crop)
        if not math.isfinite(val_loss):
            _dump_abort(cfg, epoch, "validation", val_loss)
            raise TrainingAborted("validation", val_loss)
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            save_checkpoint(cfg.checkpoint_dir, model, model_config,
                            epoch, best_val)
        rows.append({"epoch": epoch, "phase": cfg.phase,
                     "train_loss": float(np.mean(losses)),
                     "val_loss": val_loss, "rmse": rmse, "psnr": psnr_db,
                     "wall_seconds": time.time() - t0})
        _write_log(cfg.log_path, rows)
        log.info("epoch %d %s train %.5f val %.5f rmse %.5f psnr %.2f",
                 epoch, cfg.phase, rows[-1]["train_loss"], val_loss, rmse,
                 psnr_db)
    return TrainResult(best_val_loss=best_val, best_epoch=best_epoch,
                       checkpoint_dir=cfg.checkpoint_dir,
                       log_path=cfg.log_path, log_rows=rows)
