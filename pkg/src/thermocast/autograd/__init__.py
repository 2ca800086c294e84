"""Minimal float64 reverse-mode autodiff with the ops the two networks need."""

from thermocast.autograd.ops import (
    add,
    channel_slice,
    concat_channels,
    conv2d,
    conv2d_transpose,
    leaky_relu,
    maxpool2,
    mean,
    mul,
    relu,
    scale,
    select,
    sigmoid,
    square,
    sub,
    sum,
    tanh,
)
from thermocast.autograd.optim import Adam, AdamState, adam_step
from thermocast.autograd.tensor import Tensor, no_grad

__all__ = [
    "Adam", "AdamState", "Tensor", "adam_step", "add", "channel_slice", "concat_channels",
    "conv2d", "conv2d_transpose", "leaky_relu", "maxpool2", "mean", "mul", "no_grad", "relu", "scale",
    "select", "sigmoid", "square", "sub", "sum", "tanh",
]
