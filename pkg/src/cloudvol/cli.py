"""Command-line pipeline driver.

Subcommands: generate, pretrain, finetune, evaluate, predict, render.
Options come from flags plus an optional JSON config file (--config);
explicit flags win over file values, which win over built-in defaults.
Exit codes: 0 success, 2 bad configuration, 3 missing prerequisite,
4 numeric failure during training or evaluation.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from .data.cvt1 import write_tensor
from .data.manifest import DatasetManifest
from .data.normalization import NORMALIZATION
from .tensor.backend import kernel_backend
from .dataset import (GenerateConfig, finetune_records, generate_dataset,
                      load_patch, pretrain_records)
from .evaluate import (denormalize_volume, evaluate_records, predict_volume,
                       sample_eval)
from .metrics import grid_to_array, spatial_rmse_grid
from .models import (SwinConvModel, SwinMAE, UNet, UNetConfig, VARIABLES,
                     desk_swin_config, full_swin_config, mask_to_pixels)
from .training import (TrainingAborted, finetune_config, load_checkpoint,
                       load_for_finetune, pretrain_config, rebuild_model,
                       train)
from .training.batches import PatchCache
from .viz import (curtain_strip, max_column_composite, spatial_grid_image,
                  triptych, write_pgm, write_ppm)

log = logging.getLogger("cloudvol")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_NUMERIC = 4

MODELS = ("unet", "swinmae", "swinsatmae")
SCALES = ("desk", "full")


class ConfigError(Exception):
    pass


class MissingArtifact(Exception):
    pass


def _merge(defaults: Dict, ns: argparse.Namespace) -> Dict:
    """defaults < config file < explicit flags."""
    given = {k: v for k, v in vars(ns).items() if k != "command"}
    merged = dict(defaults)
    config_path = given.pop("config", None)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except FileNotFoundError:
            raise MissingArtifact(f"config file not found: {config_path}")
        except json.JSONDecodeError as err:
            raise ConfigError(f"config file is not valid JSON: {err}")
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    merged.update(given)
    missing = [k for k, v in merged.items() if v is _REQUIRED]
    if missing:
        raise ConfigError(f"missing required options: {sorted(missing)}")
    return merged


_REQUIRED = object()


def _load_manifest(data_dir) -> DatasetManifest:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise MissingArtifact(f"no manifest at {path}")
    return DatasetManifest.load(path)


def _swin_scale_config(scale: str, use_metadata: bool):
    if scale == "desk":
        return desk_swin_config(use_metadata=use_metadata)
    return full_swin_config(use_metadata=use_metadata)


def _parse_variables(value: str):
    if value == "all":
        return VARIABLES
    if value in VARIABLES:
        return (value,)
    raise ConfigError(f"variables must be one of z/iwc/re/all, got '{value}'")


def _workers(opts: Dict) -> int:
    if opts.get("deterministic"):
        return 1
    w = opts.get("workers") or 0
    return w if w > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(opts: Dict) -> int:
    kind = opts["kind"]
    storm_fraction = {"storm": 1.0, "general": 0.0}.get(kind, opts["storm_fraction"])
    cfg = GenerateConfig(out_dir=opts["out"], n_scenes=opts["n_scenes"],
                         seed=opts["seed"], storm_fraction=storm_fraction,
                         scene_size=opts["scene_size"],
                         patch_side=opts["patch_side"],
                         tracks_per_scene=opts["tracks_per_scene"],
                         min_cloudy_fraction=opts["min_cloudy_fraction"])
    manifest = generate_dataset(cfg)
    log.info("wrote %d records to %s", len(manifest.samples),
             Path(opts["out"]) / "manifest.json")
    return EXIT_OK


def _render_triptychs(model, manifest, data_dir, report_dir, seed, count):
    recs = [r for r in pretrain_records(manifest) if r.split == "val"]
    if not recs:
        recs = [r for r in pretrain_records(manifest) if r.split == "train"]
    cache = PatchCache(data_dir)
    rng = np.random.default_rng((seed, 11))
    side = model.config.image_size
    from .tensor.core import Tensor, no_grad
    from .models.metadata import patch_metadata
    for rec in recs[:count]:
        patch = cache.patch(rec)
        h, w = patch.values.shape[:2]
        r0, c0 = (h - side) // 2, (w - side) // 2
        x = patch.values[r0:r0 + side, c0:c0 + side]
        mask = model.sample_mask(rng)
        with no_grad():
            meta = None
            if model.uses_metadata:
                meta = Tensor(patch_metadata(patch)[None].astype(np.float32))
            recon = model.reconstruct(Tensor(x[None]), meta, mask)
        px = mask_to_pixels(mask, model.config.token_size)
        img = triptych(x, px, recon.data[0])
        write_ppm(Path(report_dir) / f"triptych_{rec.sample_id}.ppm", img)


def cmd_pretrain(opts: Dict) -> int:
    if opts["model"] not in ("swinmae", "swinsatmae"):
        raise ConfigError("pretraining requires a swinmae or swinsatmae model")
    manifest = _load_manifest(opts["data"])
    config = _swin_scale_config(opts["scale"], opts["model"] == "swinsatmae")
    model = SwinMAE(config, np.random.default_rng(opts["seed"]))
    tcfg = pretrain_config(opts["checkpoint_dir"], epochs=opts["epochs"],
                           batch_size=opts["batch_size"], lr=opts["lr"],
                           seed=opts["seed"])
    result = train(model, config, tcfg, opts["data"], manifest)
    log.info("best val loss %.5f at epoch %d", result.best_val_loss,
             result.best_epoch)
    report_dir = opts["report_dir"] or opts["checkpoint_dir"]
    best = rebuild_model(load_checkpoint(opts["checkpoint_dir"]),
                         np.random.default_rng(0))
    _render_triptychs(best, manifest, opts["data"], report_dir,
                      opts["seed"], opts["triptychs"])
    return EXIT_OK


def cmd_finetune(opts: Dict) -> int:
    manifest = _load_manifest(opts["data"])
    variables = _parse_variables(opts["variables"])
    seed_rng = np.random.default_rng(opts["seed"])
    if opts["model"] == "unet":
        config = UNetConfig(n_variables=len(variables))
        model = UNet(config, seed_rng, variables=variables)
        kind = "unet"
        if opts["pretrained"]:
            raise ConfigError("a pretrained encoder applies only to swin models")
    else:
        config = _swin_scale_config(opts["scale"], opts["model"] == "swinsatmae")
        kind = "swin"
        if opts["pretrained"]:
            if not (Path(opts["pretrained"]) / "index.json").exists():
                raise MissingArtifact(
                    f"no pretrained checkpoint at {opts['pretrained']}")
            try:
                model = load_for_finetune(opts["pretrained"], config, seed_rng,
                                          variables=variables)
            except ValueError as err:
                raise ConfigError(str(err))
        else:
            model = SwinConvModel(config, seed_rng, variables=variables)
    tcfg = finetune_config(opts["checkpoint_dir"], model_kind=kind,
                           epochs=opts["epochs"], batch_size=opts["batch_size"],
                           lr=opts["lr"], seed=opts["seed"])
    result = train(model, config, tcfg, opts["data"], manifest)
    log.info("best val loss %.5f at epoch %d", result.best_val_loss,
             result.best_epoch)
    return EXIT_OK


def _filter_records(manifest, split: str, kind: str) -> List:
    recs = [r for r in finetune_records(manifest) if r.split == split]
    if kind != "all":
        recs = [r for r in recs if r.kind == kind]
    return recs


def cmd_evaluate(opts: Dict) -> int:
    manifest = _load_manifest(opts["data"])
    if not (Path(opts["checkpoint"]) / "index.json").exists():
        raise MissingArtifact(f"no checkpoint at {opts['checkpoint']}")
    model = rebuild_model(load_checkpoint(opts["checkpoint"]),
                          np.random.default_rng(0))
    records = _filter_records(manifest, opts["split"], opts["kind"])
    if not records:
        raise MissingArtifact(
            f"no finetune records with split={opts['split']} kind={opts['kind']}")
    report, evals = evaluate_records(model, records, opts["data"],
                                     workers=_workers(opts))
    report_dir = Path(opts["report_dir"])
    report_dir.mkdir(parents=True, exist_ok=True)
    report.to_json(report_dir / "metrics.json")
    payload = json.loads((report_dir / "metrics.json").read_text())
    payload["subset"] = opts["kind"]
    payload["split"] = opts["split"]
    payload["checkpoint"] = str(opts["checkpoint"])
    (report_dir / "metrics.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True))
    report.to_csv(report_dir / "metrics.csv")

    grid = spatial_rmse_grid(evals, bin_deg=opts["bin_deg"])
    lat0, lon0, dense = grid_to_array(grid, bin_deg=opts["bin_deg"])
    write_tensor(report_dir / "spatial_rmse.cvt1", dense)
    (report_dir / "spatial_rmse.json").write_text(json.dumps(
        {"lat0": lat0, "lon0": lon0, "bin_deg": opts["bin_deg"],
         "shape": list(dense.shape)}, indent=2))
    write_pgm(report_dir / "spatial_rmse.pgm", spatial_grid_image(dense))
    for row in report.rows:
        if row["stratum"] == "all" and row["metric"] == "rmse":
            log.info("%s all-pixels rmse %.4f +/- %.4f (n=%d)",
                     row["variable"], row["mean"], row["std"], row["n"])
    return EXIT_OK


def _find_record(manifest, sample_id: str):
    for rec in manifest.samples:
        if rec.sample_id == sample_id:
            return rec
    raise MissingArtifact(f"sample '{sample_id}' not in manifest")


def cmd_predict(opts: Dict) -> int:
    manifest = _load_manifest(opts["data"])
    if not (Path(opts["checkpoint"]) / "index.json").exists():
        raise MissingArtifact(f"no checkpoint at {opts['checkpoint']}")
    model = rebuild_model(load_checkpoint(opts["checkpoint"]),
                          np.random.default_rng(0))
    rec = _find_record(manifest, opts["sample"])
    bundle = Path(opts["data"]) / rec.path
    if rec.path.startswith("pretrain/"):
        patch = load_patch(bundle)
    else:
        patch = PatchCache(opts["data"]).sample(rec).patch
    try:
        volume = predict_volume(model, patch)
    except ValueError as err:
        raise ConfigError(str(err))
    physical = denormalize_volume(volume, model.variables).astype(np.float32)
    out_dir = Path(opts["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    write_tensor(out_dir / "volume.cvt1", physical)
    (out_dir / "volume.json").write_text(json.dumps(
        {"sample_id": rec.sample_id, "variables": list(model.variables),
         "units": "physical", "shape": list(physical.shape)}, indent=2))
    log.info("wrote %s volume %s", "x".join(map(str, physical.shape)),
             out_dir / "volume.cvt1")
    return EXIT_OK


def cmd_render(opts: Dict) -> int:
    manifest = _load_manifest(opts["data"])
    if not (Path(opts["checkpoint"]) / "index.json").exists():
        raise MissingArtifact(f"no checkpoint at {opts['checkpoint']}")
    model = rebuild_model(load_checkpoint(opts["checkpoint"]),
                          np.random.default_rng(0))
    rec = _find_record(manifest, opts["sample"])
    if not rec.path.startswith("finetune/"):
        raise ConfigError("render needs a finetune sample with a track")
    sample = PatchCache(opts["data"]).sample(rec)
    report_dir = Path(opts["report_dir"])

    ev = sample_eval(model, sample)
    for var in model.variables:
        spec = NORMALIZATION[var]
        img = curtain_strip(ev.pred[var], ev.target[var], spec.vmin, spec.vmax)
        write_ppm(report_dir / f"curtain_{rec.sample_id}_{var}.ppm", img)

    volume = denormalize_volume(predict_volume(model, sample.patch),
                                model.variables)
    zspec = NORMALIZATION["z"]
    z_index = list(model.variables).index("z") if "z" in model.variables else 0
    composite = max_column_composite(volume[:, :, z_index], zspec.vmin,
                                     zspec.vmax)
    write_ppm(report_dir / f"composite_{rec.sample_id}.ppm", composite)
    log.info("rendered %d curtain strips and a composite to %s",
             len(model.variables), report_dir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring
# ---------------------------------------------------------------------------

_GENERATE_DEFAULTS = dict(out=_REQUIRED, n_scenes=8, seed=0, kind="mix",
                          storm_fraction=0.25, scene_size=256, patch_side=64,
                          tracks_per_scene=2, min_cloudy_fraction=0.25)
_PRETRAIN_DEFAULTS = dict(data=_REQUIRED, checkpoint_dir=_REQUIRED,
                          model="swinsatmae", scale="desk", epochs=50,
                          batch_size=32, lr=1.5e-4, seed=0,
                          deterministic=False, workers=0, report_dir=None,
                          triptychs=2)
_FINETUNE_DEFAULTS = dict(data=_REQUIRED, checkpoint_dir=_REQUIRED,
                          model="swinsatmae", scale="desk", variables="all",
                          pretrained=None, epochs=100, batch_size=8,
                          lr=1.5e-4, seed=0, deterministic=False, workers=0)
_EVALUATE_DEFAULTS = dict(data=_REQUIRED, checkpoint=_REQUIRED,
                          report_dir=_REQUIRED, split="test", kind="all",
                          bin_deg=5.0, deterministic=False, workers=0)
_PREDICT_DEFAULTS = dict(data=_REQUIRED, checkpoint=_REQUIRED,
                         sample=_REQUIRED, out=_REQUIRED)
_RENDER_DEFAULTS = dict(data=_REQUIRED, checkpoint=_REQUIRED,
                        sample=_REQUIRED, report_dir=_REQUIRED)


def _add_common(sub):
    sub.add_argument("--config", help="JSON config file; flags override it")
    sub.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudvol",
        description="2D spectral imagery to 3D cloud-property volumes")
    parser.add_argument(
        "--version", action="version",
        version=f"%(prog)s {__version__} ({kernel_backend()} kernels)")
    subs = parser.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    g = subs.add_parser("generate", help="build a synthetic dataset")
    g.add_argument("--out", default=S)
    g.add_argument("--n-scenes", dest="n_scenes", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--kind", choices=("mix", "storm", "general"), default=S)
    g.add_argument("--storm-fraction", dest="storm_fraction", type=float, default=S)
    g.add_argument("--scene-size", dest="scene_size", type=int, default=S)
    g.add_argument("--patch-side", dest="patch_side", type=int, default=S)
    g.add_argument("--tracks-per-scene", dest="tracks_per_scene", type=int, default=S)
    g.add_argument("--min-cloudy-fraction", dest="min_cloudy_fraction",
                   type=float, default=S)
    _add_common(g)

    p = subs.add_parser("pretrain", help="masked-reconstruction pre-training")
    p.add_argument("--data", default=S)
    p.add_argument("--checkpoint-dir", dest="checkpoint_dir", default=S)
    p.add_argument("--model", choices=MODELS, default=S)
    p.add_argument("--scale", choices=SCALES, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--deterministic", action="store_true", default=S)
    p.add_argument("--workers", type=int, default=S)
    p.add_argument("--report-dir", dest="report_dir", default=S)
    p.add_argument("--triptychs", type=int, default=S)
    _add_common(p)

    f = subs.add_parser("finetune", help="train a volume predictor")
    f.add_argument("--data", default=S)
    f.add_argument("--checkpoint-dir", dest="checkpoint_dir", default=S)
    f.add_argument("--model", choices=MODELS, default=S)
    f.add_argument("--scale", choices=SCALES, default=S)
    f.add_argument("--variables", choices=("z", "iwc", "re", "all"), default=S)
    f.add_argument("--pretrained", default=S,
                   help="pre-training checkpoint directory to restore")
    f.add_argument("--epochs", type=int, default=S)
    f.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    f.add_argument("--lr", type=float, default=S)
    f.add_argument("--seed", type=int, default=S)
    f.add_argument("--deterministic", action="store_true", default=S)
    _add_common(f)

    e = subs.add_parser("evaluate", help="stratified metric report")
    e.add_argument("--data", default=S)
    e.add_argument("--checkpoint", default=S)
    e.add_argument("--report-dir", dest="report_dir", default=S)
    e.add_argument("--split", choices=("train", "val", "test"), default=S)
    e.add_argument("--kind", choices=("all", "storm", "general"), default=S)
    e.add_argument("--bin-deg", dest="bin_deg", type=float, default=S)
    e.add_argument("--deterministic", action="store_true", default=S)
    e.add_argument("--workers", type=int, default=S)
    _add_common(e)

    pr = subs.add_parser("predict", help="full-field volume from one patch")
    pr.add_argument("--data", default=S)
    pr.add_argument("--checkpoint", default=S)
    pr.add_argument("--sample", default=S, help="sample id from the manifest")
    pr.add_argument("--out", default=S)
    _add_common(pr)

    r = subs.add_parser("render", help="curtain strips and composites")
    r.add_argument("--data", default=S)
    r.add_argument("--checkpoint", default=S)
    r.add_argument("--sample", default=S)
    r.add_argument("--report-dir", dest="report_dir", default=S)
    _add_common(r)
    return parser


_DISPATCH = {
    "generate": (cmd_generate, _GENERATE_DEFAULTS),
    "pretrain": (cmd_pretrain, _PRETRAIN_DEFAULTS),
    "finetune": (cmd_finetune, _FINETUNE_DEFAULTS),
    "evaluate": (cmd_evaluate, _EVALUATE_DEFAULTS),
    "predict": (cmd_predict, _PREDICT_DEFAULTS),
    "render": (cmd_render, _RENDER_DEFAULTS),
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_CONFIG
    handler, defaults = _DISPATCH[ns.command]
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.DEBUG if getattr(ns, "verbose", False) else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = _merge(defaults, ns)
        opts.pop("verbose", None)
        return handler(opts)
    except ConfigError as err:
        log.error("bad configuration: %s", err)
        return EXIT_CONFIG
    except MissingArtifact as err:
        log.error("missing prerequisite: %s", err)
        return EXIT_MISSING
    except TrainingAborted as err:
        log.error("numeric failure: %s", err)
        return EXIT_NUMERIC
    except ValueError as err:
        log.error("bad configuration: %s", err)
        return EXIT_CONFIG
    except (FileNotFoundError, IOError) as err:
        log.error("missing prerequisite: %s", err)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
