from .losses import FocalLossConfig, cross_entropy, focal_loss, inverse_frequency_alpha, softmax
from .network import ModelConfig, Network, default_model_config
from .checkpoint import (
    CheckpointError,
    ModelCheckpoint,
    checkpoint_forward,
    load_checkpoint,
    predict_topk,
    save_checkpoint,
)
from .training import TrainConfig, train

__all__ = [
    "FocalLossConfig",
    "cross_entropy",
    "focal_loss",
    "inverse_frequency_alpha",
    "softmax",
    "ModelConfig",
    "Network",
    "default_model_config",
    "CheckpointError",
    "ModelCheckpoint",
    "checkpoint_forward",
    "load_checkpoint",
    "predict_topk",
    "save_checkpoint",
    "TrainConfig",
    "train",
]
