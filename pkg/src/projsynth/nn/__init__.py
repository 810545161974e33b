"""Differentiable compute: torch tensors plus shape-checked kernels, Adam/AdamW and gradient checks."""

from .functional import (conv2d, cross_attention, downsample, gaussian, group_norm, layer_norm, linear,
                         silu, softmax, upsample_nearest)
from .gradcheck import grad_check
from .optim import OptimizerState, optimizer_step
from .params import ParameterStore

__all__ = [
    "OptimizerState", "ParameterStore", "conv2d", "cross_attention", "downsample", "gaussian", "grad_check",
    "group_norm", "layer_norm", "linear", "optimizer_step", "silu", "softmax", "upsample_nearest",
]
