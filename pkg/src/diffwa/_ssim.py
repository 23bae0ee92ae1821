"""Differentiable windowed SSIM core.

Single shared implementation: evaluation metrics average it, guided sampling
differentiates it. Plain torch ops, autograd-friendly, pure.
"""

from __future__ import annotations

import torch

from .errors import ValidationError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def check_pair(a: torch.Tensor, b: torch.Tensor):
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.ndim != 4:
        raise ValidationError(f"expected [batch, channels, H, W], got {a.ndim} dims")


def gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    kernel = torch.outer(g, g)
    return (kernel / kernel.sum()).view(1, 1, size, size)


def ssim_per_image(x: torch.Tensor, y: torch.Tensor, window_size: int = SSIM_WINDOW,
                   sigma: float = SSIM_SIGMA, data_range: float = 1.0) -> torch.Tensor:
    """Mean local SSIM per image, shape [B]. Differentiable in both inputs.

    Gaussian-windowed statistics with no padding: only fully covered windows
    contribute, so images must be at least ``window_size`` on each side.
    """
    check_pair(x, y)
    b, c, h, w = x.shape
    if h < window_size or w < window_size:
        raise ValidationError(
            f"image {h}x{w} smaller than the {window_size}x{window_size} SSIM window")
    win = gaussian_window(window_size, sigma, x.dtype, x.device).expand(c, 1, -1, -1)

    mu_x = torch.nn.functional.conv2d(x, win, groups=c)
    mu_y = torch.nn.functional.conv2d(y, win, groups=c)
    xx = torch.nn.functional.conv2d(x * x, win, groups=c) - mu_x ** 2
    yy = torch.nn.functional.conv2d(y * y, win, groups=c) - mu_y ** 2
    xy = torch.nn.functional.conv2d(x * y, win, groups=c) - mu_x * mu_y

    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * xy + c2)) / \
               ((mu_x ** 2 + mu_y ** 2 + c1) * (xx + yy + c2))
    return ssim_map.reshape(b, -1).mean(dim=1)
