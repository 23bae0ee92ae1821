"""Compact U-Net noise predictor with adaptive group normalization.

The timestep enters through a sinusoidal embedding that modulates every
normalization layer (scale and shift); there is no class embedding. The
conditional variant differs only in ``in_channels`` (noisy image concatenated
with the conditioning image along channels). Fixed coordinate channels at the
input give the network positional sensitivity, which matters when the signal
to be denoised away is position-locked (the watermark residual is).
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn

from .._coords import N_COORD_FEATURES, coordinate_features


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape [B, dim]."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / (half - 1))
    args = t.float()[:, None] * freqs[None, :].to(t.device)
    return torch.cat([torch.sin(args), torch.cos(args)], dim=1)


class AdaGroupNorm(nn.Module):
    """GroupNorm whose scale/shift are predicted from the timestep embedding."""

    def __init__(self, channels: int, emb_dim: int, groups: int = 8):
        super().__init__()
        self.norm = nn.GroupNorm(min(groups, channels), channels, affine=False)
        self.proj = nn.Linear(emb_dim, 2 * channels)

    def forward(self, x, emb):
        scale, shift = self.proj(emb).chunk(2, dim=1)
        x = self.norm(x)
        return x * (1 + scale[:, :, None, None]) + shift[:, :, None, None]


class ResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, emb_dim: int):
        super().__init__()
        self.norm1 = AdaGroupNorm(in_ch, emb_dim)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.norm2 = AdaGroupNorm(out_ch, emb_dim)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.act = nn.SiLU()
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(self.act(self.norm1(x, emb)))
        h = self.conv2(self.act(self.norm2(h, emb)))
        return h + self.skip(x)


class UNet(nn.Module):
    """Noise predictor eps(x_t, t); input may carry extra conditioning channels.

    ``channel_mults`` controls depth: one resolution level per entry, each
    halving the spatial size after the first. The final convolution is
    zero-initialized so an untrained network predicts zero noise.
    """

    def __init__(self, in_channels: int = 3, out_channels: int = 3,
                 base_channels: int = 32, channel_mults: tuple[int, ...] = (1, 2),
                 emb_dim: int = 128, coords: bool = True):
        super().__init__()
        self.in_channels = in_channels
        self.emb_dim = emb_dim
        self.coords = coords
        self.time_mlp = nn.Sequential(nn.Linear(emb_dim, emb_dim), nn.SiLU(),
                                      nn.Linear(emb_dim, emb_dim))

        chans = [base_channels * m for m in channel_mults]
        stem_in = in_channels + (N_COORD_FEATURES if coords else 0)
        self.stem = nn.Conv2d(stem_in, chans[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamples = nn.ModuleList()
        for i, ch in enumerate(chans):
            prev = chans[max(i - 1, 0)]
            self.down_blocks.append(ResBlock(prev, ch, emb_dim))
            self.downsamples.append(
                nn.Conv2d(ch, ch, 3, stride=2, padding=1) if i < len(chans) - 1 else nn.Identity())

        self.mid1 = ResBlock(chans[-1], chans[-1], emb_dim)
        self.mid2 = ResBlock(chans[-1], chans[-1], emb_dim)

        self.up_blocks = nn.ModuleList()
        self.upsamples = nn.ModuleList()
        for i, ch in reversed(list(enumerate(chans))):
            prev = chans[min(i + 1, len(chans) - 1)]
            self.upsamples.append(
                nn.Sequential(nn.Upsample(scale_factor=2, mode="nearest"),
                              nn.Conv2d(prev, prev, 3, padding=1))
                if i < len(chans) - 1 else nn.Identity())
            self.up_blocks.append(ResBlock(prev + ch, ch, emb_dim))

        self.out_norm = AdaGroupNorm(chans[0], emb_dim)
        self.out_act = nn.SiLU()
        self.out_conv = nn.Conv2d(chans[0], out_channels, 3, padding=1)
        nn.init.zeros_(self.out_conv.weight)
        nn.init.zeros_(self.out_conv.bias)

    def forward(self, x: torch.Tensor, t: torch.Tensor) -> torch.Tensor:
        emb = self.time_mlp(timestep_embedding(t, self.emb_dim))
        if self.coords:
            coords = coordinate_features(x.shape[2], x.shape[3], x.dtype)
            x = torch.cat([x, coords.expand(x.shape[0], -1, -1, -1)], dim=1)
        h = self.stem(x)
        skips = []
        for block, down in zip(self.down_blocks, self.downsamples):
            h = block(h, emb)
            skips.append(h)
            h = down(h)
        h = self.mid2(self.mid1(h, emb), emb)
        for block, up in zip(self.up_blocks, self.upsamples):
            h = up(h)
            h = block(torch.cat([h, skips.pop()], dim=1), emb)
        return self.out_conv(self.out_act(self.out_norm(h, emb)))
