from .unet import UNetConfig, UNetParams, init_params, unet_forward, unet_backward, predict
from .train import TrainConfig, TrainResult, split_indices, train

__all__ = [
    "UNetConfig", "UNetParams", "init_params", "unet_forward", "unet_backward",
    "predict", "TrainConfig", "TrainResult", "split_indices", "train",
]
