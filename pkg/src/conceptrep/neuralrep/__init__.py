"""Dense sparse-denoising and variational autoencoders trained with Adam."""

from .losses import SparsityConfig, kl_to_unit_normal, sdae_loss, vae_loss
from .model import (
    SDAE,
    VAE,
    CheckpointFormatError,
    DenseNetConfig,
    ModelParams,
    checkpoint_bytes,
    encode,
    init_params,
    load_checkpoint,
    loss_and_grads,
    reconstruct,
    reconstruction_mse,
    save_checkpoint,
)
from .optim import REFERENCE_SCHEDULE, AdamState, TrainSchedule, adam_step, lr_at_step
from .train import TrainingDiverged, TrainResult, batch_stream, train_autoencoder

__all__ = [
    "REFERENCE_SCHEDULE",
    "SDAE",
    "VAE",
    "AdamState",
    "CheckpointFormatError",
    "DenseNetConfig",
    "ModelParams",
    "SparsityConfig",
    "TrainResult",
    "TrainSchedule",
    "TrainingDiverged",
    "adam_step",
    "batch_stream",
    "checkpoint_bytes",
    "encode",
    "init_params",
    "kl_to_unit_normal",
    "load_checkpoint",
    "loss_and_grads",
    "lr_at_step",
    "reconstruct",
    "reconstruction_mse",
    "save_checkpoint",
    "sdae_loss",
    "train_autoencoder",
    "vae_loss",
]
