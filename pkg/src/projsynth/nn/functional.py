"""Shape-checked wrappers over the torch kernels the networks use.

All functions accept and return ``torch.Tensor``; gradients come from torch's
tape-based reverse mode. Shape errors raise :class:`InvalidArgumentError`
instead of torch's RuntimeError so callers see one exception family.
"""

import math

import numpy as np
import torch
import torch.nn.functional as F

from ..errors import InvalidArgumentError
from ..rng import gaussian_sample


def _need(cond, message):
    if not cond:
        raise InvalidArgumentError(message)


def conv2d(input, kernel, bias=None, stride=1, padding=0):
    """Cross-correlation with zero padding. ``input`` is NCHW, ``kernel`` OCkk."""
    _need(input.dim() == 4 and kernel.dim() == 4, "conv2d expects 4-D input and kernel")
    _need(input.shape[1] == kernel.shape[1],
          f"conv2d channel mismatch: input {input.shape[1]} vs kernel {kernel.shape[1]}")
    _need(input.shape[2] + 2 * padding >= kernel.shape[2] and input.shape[3] + 2 * padding >= kernel.shape[3],
          "conv2d kernel larger than padded input")
    return F.conv2d(input, kernel, bias, stride=stride, padding=padding)


def softmax(x, dim=-1):
    return torch.softmax(x, dim=dim)


def cross_attention(query, key, value):
    """``softmax(Q K^T / sqrt(D)) V`` for batched ``[N, L, D]`` tensors."""
    _need(query.dim() == 3 and key.dim() == 3 and value.dim() == 3, "cross_attention expects [N, L, D] tensors")
    _need(query.shape[0] == key.shape[0] == value.shape[0], "cross_attention batch mismatch")
    _need(query.shape[2] == key.shape[2], "cross_attention query/key width mismatch")
    _need(key.shape[1] == value.shape[1], "cross_attention key/value length mismatch")
    logits = query @ key.transpose(1, 2) / math.sqrt(query.shape[2])
    return softmax(logits, dim=-1) @ value


def group_norm(x, groups, weight=None, bias=None, eps=1e-5):
    _need(x.dim() >= 2 and x.shape[1] % groups == 0, f"{x.shape[1]} channels not divisible into {groups} groups")
    return F.group_norm(x, groups, weight, bias, eps)


def layer_norm(x, weight=None, bias=None, eps=1e-5):
    return F.layer_norm(x, x.shape[-1:], weight, bias, eps)


def silu(x):
    return x * torch.sigmoid(x)


def linear(x, weight, bias=None):
    _need(x.shape[-1] == weight.shape[1], f"linear width mismatch: {x.shape[-1]} vs {weight.shape[1]}")
    return F.linear(x, weight, bias)


def upsample_nearest(x, factor=2):
    return x.repeat_interleave(factor, dim=-2).repeat_interleave(factor, dim=-1)


def downsample(x, factor=2):
    """Strided subsampling: keeps every ``factor``-th row and column."""
    _need(x.shape[-1] % factor == 0 and x.shape[-2] % factor == 0,
          f"spatial dims {tuple(x.shape[-2:])} not divisible by {factor}")
    return x[..., ::factor, ::factor]


def gaussian(rng, shape, dtype=torch.float32):
    """Standard normal tensor from an explicit :class:`~projsynth.rng.RngState`."""
    return torch.from_numpy(gaussian_sample(rng, tuple(shape), np.float64)).to(dtype)
