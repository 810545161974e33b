"""Conditional U-Net noise predictor for latent grids."""

import torch
from torch import nn

from ..nn.layers import CrossAttentionBlock, Downsample, Norm, ResBlock, Upsample, timestep_embedding, zero_module


class ConditionalUNet(nn.Module):
    """U-Net over ``[N, c, h, w]`` latents conditioned on a timestep and a context sequence.

    Cross-attention to the context runs at every level listed in
    ``attention_levels`` and in the bottleneck. ``adapter`` (``[N, mid]`` or
    ``[mid]``) multiplies the bottleneck features, giving each task its own
    modulation over a shared backbone.
    """

    def __init__(self, latent_channels=3, base_channels=64, channel_mult=(1, 2, 2), num_res_blocks=2,
                 context_dim=64, attention_levels=(1, 2)):
        super().__init__()
        self.base_channels = base_channels
        emb_dim = 4 * base_channels
        self.time_mlp = nn.Sequential(nn.Linear(base_channels, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim))
        self.conv_in = nn.Conv2d(latent_channels, base_channels, 3, padding=1)

        chans = [base_channels * m for m in channel_mult]
        self.down = nn.ModuleList()
        skips = [base_channels]
        ch = base_channels
        for level, out_ch in enumerate(chans):
            for _ in range(num_res_blocks):
                attn = CrossAttentionBlock(out_ch, context_dim) if level in attention_levels else None
                self.down.append(nn.ModuleList([ResBlock(ch, out_ch, emb_dim), attn or nn.Identity()]))
                ch = out_ch
                skips.append(ch)
            if level < len(chans) - 1:
                self.down.append(Downsample(ch, ch))
                skips.append(ch)

        self.mid_res1 = ResBlock(ch, ch, emb_dim)
        self.mid_attn = CrossAttentionBlock(ch, context_dim)
        self.mid_res2 = ResBlock(ch, ch, emb_dim)
        self.mid_channels = ch

        self.up = nn.ModuleList()
        for level in reversed(range(len(chans))):
            out_ch = chans[level]
            for i in range(num_res_blocks + 1):
                attn = CrossAttentionBlock(out_ch, context_dim) if level in attention_levels else None
                self.up.append(nn.ModuleList([ResBlock(ch + skips.pop(), out_ch, emb_dim), attn or nn.Identity()]))
                ch = out_ch
            if level > 0:
                self.up.append(Upsample(ch, ch))

        self.norm_out = Norm(ch)
        self.conv_out = zero_module(nn.Conv2d(ch, latent_channels, 3, padding=1))

    def forward(self, z, t, context, adapter=None):
        emb = self.time_mlp(timestep_embedding(t, self.base_channels).to(z.dtype))
        h = self.conv_in(z)
        hs = [h]
        for block in self.down:
            if isinstance(block, Downsample):
                h = block(h)
            else:
                res, attn = block
                h = res(h, emb)
                h = attn(h, context) if isinstance(attn, CrossAttentionBlock) else h
            hs.append(h)
        h = self.mid_res1(h, emb)
        h = self.mid_attn(h, context)
        if adapter is not None:
            scale = adapter if adapter.dim() == 2 else adapter[None]
            h = h * scale[:, :, None, None]
        h = self.mid_res2(h, emb)
        for block in self.up:
            if isinstance(block, Upsample):
                h = block(h)
            else:
                res, attn = block
                h = res(torch.cat([h, hs.pop()], dim=1), emb)
                h = attn(h, context) if isinstance(attn, CrossAttentionBlock) else h
        return self.conv_out(torch.nn.functional.silu(self.norm_out(h)))
