"""Tensor arithmetic and reverse-mode autodiff for the layers frnet needs."""
from . import backend
from .gradcheck import GradCheckReport, grad_check
from .ops import (
    LayerParams,
    activation,
    adaptive_avg_pool,
    add,
    batch_norm,
    broadcast_to,
    concat_channels,
    conv2d,
    cross_entropy,
    depthwise_conv2d,
    dropout,
    elu,
    global_avg_pool,
    linear,
    mul,
    pair_softmax,
    relu,
    reshape,
    scale,
    separable_conv2d,
    slice_features,
    sum_all,
    upsample_nearest,
)
from .tensor import Tensor

BACKEND = backend.NAME

__all__ = [
    "BACKEND", "GradCheckReport", "LayerParams", "Tensor", "activation", "adaptive_avg_pool", "add",
    "batch_norm", "broadcast_to", "concat_channels", "conv2d", "cross_entropy", "depthwise_conv2d",
    "dropout", "elu", "global_avg_pool", "grad_check", "linear", "mul", "pair_softmax", "relu",
    "reshape", "scale", "separable_conv2d", "slice_features", "sum_all", "upsample_nearest",
]
