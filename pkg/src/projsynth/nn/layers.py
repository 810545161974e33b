"""Network building blocks shared by the autoencoder, denoiser and SharpNet."""

import math
from contextlib import contextmanager

import torch
from torch import nn

from . import functional as PF


def norm_groups(channels):
    for g in (8, 4, 2):
        if channels % g == 0:
            return g
    return 1


class Norm(nn.GroupNorm):
    def __init__(self, channels):
        super().__init__(norm_groups(channels), channels)


class SiLU(nn.Module):
    def forward(self, x):
        return PF.silu(x)


class ResBlock(nn.Module):
    """GroupNorm-SiLU-conv twice with an optional embedding-driven affine modulation."""

    def __init__(self, in_ch, out_ch=None, emb_dim=None):
        super().__init__()
        out_ch = out_ch or in_ch
        self.norm1 = Norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm2 = Norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.emb = nn.Linear(emb_dim, 2 * out_ch) if emb_dim else None
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb=None):
        h = self.conv1(PF.silu(self.norm1(x)))
        h = self.norm2(h)
        if self.emb is not None and emb is not None:
            scale, shift = self.emb(PF.silu(emb)).chunk(2, dim=1)
            h = h * (1 + scale[:, :, None, None]) + shift[:, :, None, None]
        h = self.conv2(PF.silu(h))
        return self.skip(x) + h


class CrossAttentionBlock(nn.Module):
    """Spatial tokens attend to a context sequence; residual, zero-initialised output."""

    def __init__(self, channels, context_dim, width=None):
        super().__init__()
        width = width or channels
        self.norm = Norm(channels)
        self.to_q = nn.Linear(channels, width, bias=False)
        self.to_k = nn.Linear(context_dim, width, bias=False)
        self.to_v = nn.Linear(context_dim, width, bias=False)
        self.out = nn.Linear(width, channels)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x, context):
        n, c, h, w = x.shape
        tokens = self.norm(x).flatten(2).transpose(1, 2)
        attended = PF.cross_attention(self.to_q(tokens), self.to_k(context), self.to_v(context))
        return x + self.out(attended).transpose(1, 2).reshape(n, c, h, w)


class Upsample(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(PF.upsample_nearest(x, 2))


class Downsample(nn.Module):
    def __init__(self, in_ch, out_ch):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


def timestep_embedding(t, dim, max_period=10000.0):
    """Sinusoidal embedding of (possibly fractional) timesteps ``t`` of shape [N]."""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=1)
    return emb


def zero_module(module):
    for p in module.parameters():
        nn.init.zeros_(p)
    return module


@contextmanager
def seeded(rng):
    """Run module construction under a torch seed drawn from an explicit stream."""
    seed = rng.randint(2**31 - 1)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield
