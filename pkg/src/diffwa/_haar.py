"""Single-level orthonormal Haar decomposition into LL/LH/HL/HH subbands.

Leaf module: the analysis package re-exports it, and the watermark encoder
synthesizes its wavelet-domain payload through it.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import ValidationError

BAND_NAMES = ("LL", "LH", "HL", "HH")


@dataclass(frozen=True)
class Subbands:
    """Half-resolution subbands: approximation (LL), horizontal detail (LH,
    variation across columns), vertical detail (HL, variation across rows),
    and diagonal detail (HH).
    """

    ll: torch.Tensor
    lh: torch.Tensor
    hl: torch.Tensor
    hh: torch.Tensor

    def band(self, name: str) -> torch.Tensor:
        try:
            return getattr(self, name.lower())
        except AttributeError:
            raise ValidationError(f"unknown band {name!r}; expected one of {BAND_NAMES}") from None

    def zeroed(self, name: str) -> "Subbands":
        """Copy with one named band replaced by zeros."""
        key = name.lower()
        if key not in ("ll", "lh", "hl", "hh"):
            raise ValidationError(f"unknown band {name!r}; expected one of {BAND_NAMES}")
        parts = {k: getattr(self, k) for k in ("ll", "lh", "hl", "hh")}
        parts[key] = torch.zeros_like(parts[key])
        return Subbands(**parts)


def haar_decompose(x: torch.Tensor) -> Subbands:
    """Orthonormal analysis: each coefficient is (+-a +-b +-c +-d)/2, so total
    energy is preserved exactly. Requires even height and width.
    """
    if x.shape[-1] % 2 or x.shape[-2] % 2:
        raise ValidationError(f"Haar transform needs even dimensions, got {tuple(x.shape[-2:])}")
    a = x[..., 0::2, 0::2]
    b = x[..., 0::2, 1::2]
    c = x[..., 1::2, 0::2]
    d = x[..., 1::2, 1::2]
    return Subbands(
        ll=(a + b + c + d) / 2,
        lh=(a - b + c - d) / 2,
        hl=(a + b - c - d) / 2,
        hh=(a - b - c + d) / 2,
    )


def haar_reconstruct(sb: Subbands) -> torch.Tensor:
    """Exact inverse of :func:`haar_decompose`."""
    ll, lh, hl, hh = sb.ll, sb.lh, sb.hl, sb.hh
    a = (ll + lh + hl + hh) / 2
    b = (ll - lh + hl - hh) / 2
    c = (ll + lh - hl - hh) / 2
    d = (ll - lh - hl + hh) / 2
    shape = list(ll.shape)
    shape[-2] *= 2
    shape[-1] *= 2
    x = torch.empty(shape, dtype=ll.dtype, device=ll.device)
    x[..., 0::2, 0::2] = a
    x[..., 0::2, 1::2] = b
    x[..., 1::2, 0::2] = c
    x[..., 1::2, 1::2] = d
    return x
