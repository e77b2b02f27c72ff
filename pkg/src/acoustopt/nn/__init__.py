from .engine import (
    Tensor,
    batchnorm,
    concat,
    conv2d,
    conv2d_5x5,
    dense,
    leaky_relu,
    maxpool2,
    mse,
    parameter,
    sigmoid,
    tensor_sum,
    upsample2,
    weighted_sum,
)
from .models import BenchMLP, LayerSpec, UNet, build_unet, design_to_nn, he_init, nn_to_design
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Tensor", "parameter", "conv2d", "conv2d_5x5", "maxpool2", "upsample2", "batchnorm",
    "leaky_relu", "sigmoid", "dense", "concat", "mse", "tensor_sum", "weighted_sum",
    "UNet", "BenchMLP", "LayerSpec", "build_unet", "he_init", "design_to_nn", "nn_to_design",
    "save_checkpoint", "load_checkpoint",
]
