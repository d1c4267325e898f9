"""From-scratch NHWC neural network engine: layers, losses, optimizers,
a sequential model container, and a finite-difference gradient checker."""

from .gradcheck import GradCheckResult, gradient_check
from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    Param,
    ReLU,
    Softmax,
    conv_out_len,
    he_uniform,
    pool_out_len,
)
from .losses import one_hot, softmax_cross_entropy
from .model import Model
from .optim import SGD, Adam, Optimizer

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "Dropout",
    "Flatten",
    "GradCheckResult",
    "Layer",
    "MaxPool2D",
    "Model",
    "Optimizer",
    "Param",
    "ReLU",
    "SGD",
    "Softmax",
    "conv_out_len",
    "gradient_check",
    "he_uniform",
    "one_hot",
    "pool_out_len",
    "softmax_cross_entropy",
]
