"""Autodiff engine and the two neural impression estimators."""

from . import tensor
from .layers import FeatNet, FeatNetConfig, SslHead, SslHeadConfig, attention_pool
from .tensor import Tensor
from .train import (
    GRAD_CHECK_BLOCKS,
    Adam,
    TrainConfig,
    TrainResult,
    grad_check,
    train,
    write_loss_curve,
)

__all__ = [
    "Adam",
    "FeatNet",
    "FeatNetConfig",
    "GRAD_CHECK_BLOCKS",
    "SslHead",
    "SslHeadConfig",
    "Tensor",
    "TrainConfig",
    "TrainResult",
    "attention_pool",
    "grad_check",
    "tensor",
    "train",
    "write_loss_curve",
]
