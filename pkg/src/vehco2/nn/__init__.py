from .model import (
    DimensionError,
    ModelConfig,
    NumericError,
    backward,
    forward,
    head_forward,
    init_params,
    loss_and_grads,
    lstm_forward,
    mse_loss,
    predict,
)
from .optim import AdamState, ConfigError, TrainConfig, adam_step, cosine_warmup_lr
from .train import EpochRecord, TrainingDiverged, train

__all__ = [
    "DimensionError",
    "ModelConfig",
    "NumericError",
    "backward",
    "forward",
    "head_forward",
    "init_params",
    "loss_and_grads",
    "lstm_forward",
    "mse_loss",
    "predict",
    "AdamState",
    "ConfigError",
    "TrainConfig",
    "adam_step",
    "cosine_warmup_lr",
    "EpochRecord",
    "TrainingDiverged",
    "train",
]
