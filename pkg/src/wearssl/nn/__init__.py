from .layers import (
    LAYER_KINDS,
    BatchNorm1d,
    Conv1d,
    Dense,
    Dropout,
    GlobalMaxPool,
    Layer,
    LayerSpec,
    ReLU,
    ShapeError,
    Sigmoid,
    build_layer,
    glorot_uniform,
)
from .losses import log_softmax, mse, softmax_cross_entropy, sum_of_outputs
from .network import Network
from .optim import Adam, Lars, cosine_lr

__all__ = [
    "LAYER_KINDS",
    "BatchNorm1d",
    "Conv1d",
    "Dense",
    "Dropout",
    "GlobalMaxPool",
    "Layer",
    "LayerSpec",
    "ReLU",
    "ShapeError",
    "Sigmoid",
    "build_layer",
    "glorot_uniform",
    "log_softmax",
    "mse",
    "softmax_cross_entropy",
    "sum_of_outputs",
    "Network",
    "Adam",
    "Lars",
    "cosine_lr",
]
