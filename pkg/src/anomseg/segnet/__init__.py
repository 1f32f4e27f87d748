"""From-scratch encoder-decoder segmentation network with dropout."""

from .blocks import NetworkError
from .network import (
    NetworkConfig,
    WeightStore,
    forward,
    forward_batch,
    init_weights,
    loss_and_gradients,
    mc_sample,
    paper_scale_config,
)
from .storage import load_weights, save_training_log, save_weights
from .training import (
    Adam,
    TrainConfig,
    TrainResult,
    apply_geometric,
    augment,
    dice_macro,
    train,
)

__all__ = [
    "Adam",
    "NetworkConfig",
    "NetworkError",
    "TrainConfig",
    "TrainResult",
    "WeightStore",
    "apply_geometric",
    "augment",
    "dice_macro",
    "forward",
    "forward_batch",
    "init_weights",
    "load_weights",
    "loss_and_gradients",
    "mc_sample",
    "paper_scale_config",
    "save_training_log",
    "save_weights",
    "train",
]
