"""Distortion layers applied between embedding and extraction during training.

Semantics of the fraction parameter ``p``:

* ``crop``     — keep a random square patch covering fraction ``p`` of the
  area (the output is smaller than the input); ``p = 1`` keeps everything.
* ``cropout``  — replace a random rectangle covering fraction ``p`` with the
  cover image; ``p = 0`` touches nothing.
* ``dropout``  — replace exactly ``round(p * H * W)`` pixels per image with
  cover pixels; ``p = 0`` touches nothing.

``jpeg`` runs a real codec round-trip (evaluation semantics). The trainer
substitutes the differentiable ``jpeg_mask`` surrogate, which zeroes
high-frequency block-transform coefficients; at quality 100 it keeps every
coefficient and acts as the identity.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from ..errors import ConfigurationError, ValidationError

NOISE_KINDS = ("identity", "crop", "cropout", "dropout", "gaussian_blur", "jpeg", "jpeg_mask")


@dataclass(frozen=True)
class NoiseLayerSpec:
    """One distortion: a kind plus its fraction/strength parameter."""

    kind: str
    p: float = None
    quality: int = None
    sigma: float = None

    _DEFAULTS = {
        "crop": {"p": 0.035}, "cropout": {"p": 0.3}, "dropout": {"p": 0.3},
        "gaussian_blur": {"sigma": 1.0}, "jpeg": {"quality": 50}, "jpeg_mask": {"quality": 50},
    }

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ConfigurationError(f"unknown noise layer kind {self.kind!r}; "
                                     f"expected one of {NOISE_KINDS}")
        defaults = self._DEFAULTS.get(self.kind, {})
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)


def _generator(rng) -> torch.Generator:
    if isinstance(rng, torch.Generator):
        return rng
    gen = torch.Generator()
    gen.manual_seed(int(rng))
    return gen


def apply_noise_layer(image: torch.Tensor, spec: NoiseLayerSpec, rng_seed,
                      cover: torch.Tensor | None = None) -> torch.Tensor:
    """Apply one distortion layer. ``cover`` supplies replacement pixels for
    cropout/dropout and must match the image shape."""
    if image.ndim != 4:
        raise ValidationError(f"expected [batch, C, H, W], got {tuple(image.shape)}")
    if spec.kind in ("cropout", "dropout"):
        if cover is None:
            raise ConfigurationError(f"{spec.kind} needs a cover image for replaced pixels")
        if cover.shape != image.shape:
            raise ValidationError("cover shape must match the image shape")

    gen = _generator(rng_seed)
    if spec.kind == "identity":
        return image.clone()
    if spec.kind == "crop":
        return _crop(image, spec.p, gen)
    if spec.kind == "cropout":
        return _cropout(image, cover, spec.p, gen)
    if spec.kind == "dropout":
        return _dropout(image, cover, spec.p, gen)
    if spec.kind == "gaussian_blur":
        return gaussian_blur(image, spec.sigma)
    if spec.kind == "jpeg":
        return jpeg_roundtrip(image, spec.quality)
    if spec.kind == "jpeg_mask":
        return jpeg_mask(image, spec.quality)
    raise ConfigurationError(f"unknown noise layer kind {spec.kind!r}")


def _rand_int(gen: torch.Generator, high: int) -> int:
    if high <= 0:
        return 0
    return int(torch.randint(0, high + 1, (1,), generator=gen))


def _crop(image, p, gen):
    h, w = image.shape[2], image.shape[3]
    side_h = max(1, min(h, round(h * math.sqrt(p))))
    side_w = max(1, min(w, round(w * math.sqrt(p))))
    top = _rand_int(gen, h - side_h)
    left = _rand_int(gen, w - side_w)
    return image[:, :, top:top + side_h, left:left + side_w].clone()


def _cropout(image, cover, p, gen):
    h, w = image.shape[2], image.shape[3]
    side_h = min(h, round(h * math.sqrt(p)))
    side_w = min(w, round(w * math.sqrt(p)))
    out = image.clone()
    if side_h == 0 or side_w == 0:
        return out
    top = _rand_int(gen, h - side_h)
    left = _rand_int(gen, w - side_w)
    out[:, :, top:top + side_h, left:left + side_w] = \
        cover[:, :, top:top + side_h, left:left + side_w]
    return out


def _dropout(image, cover, p, gen):
    b, c, h, w = image.shape
    k = round(p * h * w)
    if k == 0:
        return image.clone()
    scores = torch.rand(b, h * w, generator=gen)
    idx = scores.argsort(dim=1)[:, :k]
    mask = torch.zeros(b, h * w, dtype=torch.bool)
    mask.scatter_(1, idx, True)
    mask = mask.view(b, 1, h, w)
    return torch.where(mask, cover, image)


def gaussian_blur(image: torch.Tensor, sigma: float) -> torch.Tensor:
    """Separable Gaussian blur; sigma below 1e-8 is the identity."""
    if sigma <= 1e-8:
        return image.clone()
    radius = max(1, math.ceil(3.0 * sigma))
    coords = torch.arange(-radius, radius + 1, dtype=image.dtype)
    kernel1d = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    kernel1d = kernel1d / kernel1d.sum()
    c = image.shape[1]
    kh = kernel1d.view(1, 1, 1, -1).expand(c, 1, 1, -1)
    kv = kernel1d.view(1, 1, -1, 1).expand(c, 1, -1, 1)
    padded = torch.nn.functional.pad(image, (radius, radius, 0, 0), mode="reflect")
    out = torch.nn.functional.conv2d(padded, kh, groups=c)
    padded = torch.nn.functional.pad(out, (0, 0, radius, radius), mode="reflect")
    out = torch.nn.functional.conv2d(padded, kv, groups=c)
    return out.clamp(0.0, 1.0)


def jpeg_roundtrip(image: torch.Tensor, quality: int) -> torch.Tensor:
    """Real JPEG compression/decompression per image (not differentiable)."""
    out = torch.empty_like(image)
    arr = (image.detach().clamp(0, 1) * 255.0).round().to(torch.uint8).permute(0, 2, 3, 1).numpy()
    for i in range(arr.shape[0]):
        buf = io.BytesIO()
        Image.fromarray(arr[i]).save(buf, format="JPEG", quality=int(quality))
        buf.seek(0)
        decoded = np.asarray(Image.open(buf).convert("RGB"), dtype=np.float32) / 255.0
        out[i] = torch.from_numpy(decoded).permute(2, 0, 1).to(image.dtype)
    return out


def _dct_matrix(n: int = 8) -> torch.Tensor:
    k = torch.arange(n, dtype=torch.float64).view(-1, 1)
    i = torch.arange(n, dtype=torch.float64).view(1, -1)
    mat = torch.cos(math.pi * (2 * i + 1) * k / (2 * n)) * math.sqrt(2.0 / n)
    mat[0] = math.sqrt(1.0 / n)
    return mat


def jpeg_mask(image: torch.Tensor, quality: int) -> torch.Tensor:
    """Differentiable stand-in for JPEG: per 8x8 block, zero every transform
    coefficient with diagonal index above a quality-dependent cutoff.
    Quality 100 keeps all 64 coefficients (identity up to float error)."""
    b, c, h, w = image.shape
    if h % 8 or w % 8:
        raise ValidationError(f"block transform needs multiples of 8, got {h}x{w}")
    cutoff = round(14 * quality / 100)
    dct = _dct_matrix(8).to(torch.float64)
    idx = torch.arange(8, dtype=torch.float64)
    keep = (idx.view(-1, 1) + idx.view(1, -1)) <= cutoff

    x = image.to(torch.float64).reshape(b, c, h // 8, 8, w // 8, 8).permute(0, 1, 2, 4, 3, 5)
    coef = torch.einsum("ij,bcpqjk,lk->bcpqil", dct, x, dct)
    coef = coef * keep
    blocks = torch.einsum("ji,bcpqjk,kl->bcpqil", dct, coef, dct)
    out = blocks.permute(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
    return out.clamp(0.0, 1.0).to(image.dtype)
