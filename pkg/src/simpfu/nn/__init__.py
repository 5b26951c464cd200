"""Minimal tensor engine with reverse-mode differentiation."""

from .ops import (
    BatchNormState,
    avgpool_time,
    batchnorm,
    bce_loss,
    conv1d_k1,
    conv2d,
    frequency_unwrap,
    maxpool2d,
    relu,
    sigmoid,
    sum_all,
)
from .optim import Adam
from .tensor import Tape, Tensor, active_tape

__all__ = [
    "Adam",
    "BatchNormState",
    "Tape",
    "Tensor",
    "active_tape",
    "avgpool_time",
    "batchnorm",
    "bce_loss",
    "conv1d_k1",
    "conv2d",
    "frequency_unwrap",
    "maxpool2d",
    "relu",
    "sigmoid",
    "sum_all",
]
