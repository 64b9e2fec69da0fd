"""Training loops, track-masked losses, batching, and checkpoints."""

from .batches import (FinetuneBatch, PatchCache, PretrainBatch,
                      finetune_batches, pretrain_batches)
from .checkpoint import (Checkpoint, config_hash, load_checkpoint,
                         load_for_finetune, rebuild_model, save_checkpoint)
from .loop import (TrainConfig, TrainingAborted, TrainResult, finetune_config,
                   pretrain_config, train)
from .loss import masked_mse_loss, select_variables, valid_cells

__all__ = [
    "Checkpoint", "FinetuneBatch", "PatchCache", "PretrainBatch",
    "TrainConfig", "TrainResult", "TrainingAborted", "config_hash",
    "finetune_batches", "finetune_config", "load_checkpoint",
    "load_for_finetune", "masked_mse_loss", "pretrain_batches",
    "pretrain_config", "rebuild_model", "save_checkpoint",
    "select_variables", "train", "valid_cells",
]
