"""Classical-distortion robustness battery for a trained codec.

Noise amplitudes are specified on the 8-bit intensity scale and rescaled by
1/255 before being applied to [0, 1] images.
"""

from __future__ import annotations

import torch

from ..codec.models import WatermarkCodec, bit_accuracy
from ..codec.noise_layers import gaussian_blur, jpeg_roundtrip
from ..errors import ValidationError
from ..seeds import SeedStreams
from .metrics import MetricsRecord, psnr, ssim

DISTORTION_KINDS = ("identity", "edge_sharpen", "gaussian_blur", "uniform_noise",
                    "gaussian_noise", "salt_pepper", "jpeg")

# 3x3 unsharp mask: center 5, cross -1.
_SHARPEN_KERNEL = torch.tensor([[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]])


def edge_sharpen(image: torch.Tensor) -> torch.Tensor:
    c = image.shape[1]
    kernel = _SHARPEN_KERNEL.to(image.dtype).view(1, 1, 3, 3).expand(c, 1, 3, 3)
    padded = torch.nn.functional.pad(image, (1, 1, 1, 1), mode="reflect")
    return torch.nn.functional.conv2d(padded, kernel, groups=c).clamp(0.0, 1.0)


def uniform_noise(image: torch.Tensor, amplitude_8bit: float, gen: torch.Generator) -> torch.Tensor:
    noise = torch.rand(image.shape, generator=gen, dtype=image.dtype) * (amplitude_8bit / 255.0)
    return (image + noise).clamp(0.0, 1.0)


def gaussian_noise(image: torch.Tensor, sigma_8bit: float, gen: torch.Generator) -> torch.Tensor:
    noise = torch.randn(image.shape, generator=gen, dtype=image.dtype) * (sigma_8bit / 255.0)
    return (image + noise).clamp(0.0, 1.0)


def salt_pepper(image: torch.Tensor, p: float, gen: torch.Generator) -> torch.Tensor:
    """Each pixel independently becomes full-white or full-black with probability p."""
    b, _, h, w = image.shape
    roll = torch.rand(b, 1, h, w, generator=gen, dtype=image.dtype)
    value = (torch.rand(b, 1, h, w, generator=gen, dtype=image.dtype) < 0.5).to(image.dtype)
    return torch.where(roll < p, value.expand_as(image), image)


def apply_distortion(kind: str, image: torch.Tensor, seed: int,
                     blur_sigma: float = 1.0, jpeg_quality: int = 50) -> torch.Tensor:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    if kind == "identity":
        return image.clone()
    if kind == "edge_sharpen":
        return edge_sharpen(image)
    if kind == "gaussian_blur":
        return gaussian_blur(image, blur_sigma)
    if kind == "uniform_noise":
        return uniform_noise(image, 50.0, gen)
    if kind == "gaussian_noise":
        return gaussian_noise(image, 20.0, gen)
    if kind == "salt_pepper":
        return salt_pepper(image, 0.1, gen)
    if kind == "jpeg":
        return jpeg_roundtrip(image, jpeg_quality)
    raise ValidationError(f"unknown distortion kind {kind!r}; expected one of {DISTORTION_KINDS}")


def distortion_suite(encoded: torch.Tensor, originals: torch.Tensor, bits: torch.Tensor,
                     codec: WatermarkCodec, kinds=DISTORTION_KINDS,
                     seed: int = 0) -> dict[str, MetricsRecord]:
    """Per-distortion fidelity (vs the originals) and payload survival."""
    streams = SeedStreams(seed)
    table: dict[str, MetricsRecord] = {}
    for kind in kinds:
        distorted = apply_distortion(kind, encoded, streams.seed(kind))
        decoded = codec.extract(distorted)
        table[kind] = MetricsRecord(
            psnr=psnr(distorted, originals),
            ssim=ssim(distorted, originals),
            bit_accuracy=bit_accuracy(decoded.bits, bits),
        )
    return table
