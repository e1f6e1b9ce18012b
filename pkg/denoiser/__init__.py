"""
Sketch denoisers: the trainable permutation-equivariant network, the oracle
denoiser, training and checkpoints

@version: v0.1.0
"""

from .checkpoint import CheckpointFormatError, load_checkpoint, save_checkpoint
from .denoiser_network import NumericError, SketchDenoiser, TorchDenoiser, oracle_denoiser
from .denoiser_training import (
    LossBreakdown,
    TrainConfig,
    TrainingDivergedError,
    TrainResult,
    build_model,
    class_accuracy,
    gradient_check,
    loss,
    train,
    train_step,
)

__all__ = [
    'CheckpointFormatError',
    'LossBreakdown',
    'NumericError',
    'SketchDenoiser',
    'TorchDenoiser',
    'TrainConfig',
    'TrainResult',
    'TrainingDivergedError',
    'build_model',
    'class_accuracy',
    'gradient_check',
    'load_checkpoint',
    'loss',
    'oracle_denoiser',
    'save_checkpoint',
    'train',
    'train_step',
]
