"""Checkpoint store: one array file per parameter plus a JSON index.

The index records the model config (with a content hash), the epoch and
best validation loss, the model class, and the parameter file map. Restoring
for fine-tuning keeps encoder weights and discards the reconstruction head.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from ..data.cvt1 import read_tensor, write_tensor
from ..models import SwinConfig, SwinConvModel, SwinMAE, UNet, UNetConfig

CHECKPOINT_VERSION = 1
INDEX_NAME = "index.json"

_CONFIG_CLASSES = {"SwinConfig": SwinConfig, "UNetConfig": UNetConfig}


def config_hash(config) -> str:
    """sha256 of the canonical JSON form of a config dataclass."""
    payload = json.dumps(dataclasses.asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()


def config_from_dict(class_name: str, fields: Dict):
    cls = _CONFIG_CLASSES.get(class_name)
    if cls is None:
        raise ValueError(f"unknown config class '{class_name}'")
    coerced = {k: tuple(v) if isinstance(v, list) else v
               for k, v in fields.items()}
    return cls(**coerced)


@dataclass
class Checkpoint:
    config: object
    config_hash: str
    model_class: str
    variables: Tuple[str, ...]
    epoch: int
    best_val_loss: float
    state: Dict[str, np.ndarray]


def save_checkpoint(ckpt_dir, model, config, epoch: int,
                    best_val_loss: float) -> Path:
    ckpt_dir = Path(ckpt_dir)
    (ckpt_dir / "params").mkdir(parents=True, exist_ok=True)
    param_map = {}
    for i, (name, p) in enumerate(model.named_parameters()):
        rel = f"params/p{i:05d}.cvt1"
        write_tensor(ckpt_dir / rel, p.data)
        param_map[name] = rel
    index = {
        "version": CHECKPOINT_VERSION,
        "config_class": type(config).__name__,
        "config": dataclasses.asdict(config),
        "config_hash": config_hash(config),
        "model_class": type(model).__name__,
        "variables": list(getattr(model, "variables", ())),
        "epoch": epoch,
        "best_val_loss": float(best_val_loss),
        "params": param_map,
    }
    tmp = ckpt_dir / (INDEX_NAME + ".tmp")
    tmp.write_text(json.dumps(index, indent=1, sort_keys=True))
    tmp.replace(ckpt_dir / INDEX_NAME)
    return ckpt_dir


def load_checkpoint(ckpt_dir) -> Checkpoint:
    ckpt_dir = Path(ckpt_dir)
    index_path = ckpt_dir / INDEX_NAME
    if not index_path.exists():
        raise FileNotFoundError(f"no checkpoint index at {index_path}")
    index = json.loads(index_path.read_text())
    config = config_from_dict(index["config_class"], index["config"])
    stored_hash = index["config_hash"]
    if config_hash(config) != stored_hash:
        raise ValueError("checkpoint config does not match its recorded hash")
    state = {name: read_tensor(ckpt_dir / rel)
             for name, rel in index["params"].items()}
    return Checkpoint(config=config, config_hash=stored_hash,
                      model_class=index["model_class"],
                      variables=tuple(index["variables"]),
                      epoch=int(index["epoch"]),
                      best_val_loss=float(index["best_val_loss"]),
                      state=state)


def rebuild_model(ckpt: Checkpoint, rng: Optional[np.random.Generator] = None,
                  dtype=None):
    """Reconstruct the checkpointed model class and restore its weights."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if ckpt.model_class == "SwinMAE":
        model = SwinMAE(ckpt.config, rng, dtype=dtype)
    elif ckpt.model_class == "SwinConvModel":
        model = SwinConvModel(ckpt.config, rng, variables=ckpt.variables,
                              dtype=dtype)
    elif ckpt.model_class == "UNet":
        model = UNet(ckpt.config, rng, variables=ckpt.variables, dtype=dtype)
    else:
        raise ValueError(f"unknown model class '{ckpt.model_class}'")
    model.load_state_dict(ckpt.state)
    return model


def load_for_finetune(ckpt_dir, config: SwinConfig, rng: np.random.Generator,
                      variables=("z", "iwc", "re"), dtype=None) -> SwinConvModel:
    """Pre-trained encoder + fresh volume decoder, everything trainable.

    The target encoder config must hash-match the checkpoint's config.
    """
    ckpt = load_checkpoint(ckpt_dir)
    if ckpt.model_class != "SwinMAE":
        raise ValueError(f"expected a pre-training checkpoint, got {ckpt.model_class}")
    if config_hash(config) != ckpt.config_hash:
        raise ValueError("encoder config hash does not match checkpoint")
    model = SwinConvModel(config, rng, variables=variables, dtype=dtype)
    prefix = "encoder."
    enc_state = {k[len(prefix):]: v for k, v in ckpt.state.items()
                 if k.startswith(prefix)}
    model.encoder.load_state_dict(enc_state)
    return model
