"""Image-fidelity metrics: PSNR and windowed SSIM (shared core in ``_ssim``)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from .._ssim import SSIM_WINDOW, check_pair, ssim_per_image  # noqa: F401

__all__ = ["ssim_per_image", "ssim", "psnr", "psnr_per_image", "MetricsRecord", "format_metric"]


def ssim(x: torch.Tensor, y: torch.Tensor, window_size: int = SSIM_WINDOW) -> float:
    """Batch-mean SSIM."""
    with torch.no_grad():
        return float(ssim_per_image(x, y, window_size=window_size).mean())


def psnr_per_image(a: torch.Tensor, b: torch.Tensor, data_range: float = 1.0) -> torch.Tensor:
    """PSNR in dB per image (peak = ``data_range``); +inf for identical images."""
    check_pair(a, b)
    mse = ((a - b) ** 2).reshape(a.shape[0], -1).mean(dim=1)
    out = torch.full_like(mse, float("inf"))
    nz = mse > 0
    out[nz] = 10.0 * torch.log10(data_range ** 2 / mse[nz])
    return out


def psnr(a: torch.Tensor, b: torch.Tensor) -> float:
    """Batch-mean PSNR in dB; +inf (the identical-pair sentinel) propagates."""
    with torch.no_grad():
        return float(psnr_per_image(a, b).mean())


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluation row; ``ber`` is always 1 - bit_accuracy."""

    psnr: float
    ssim: float
    bit_accuracy: float

    @property
    def ber(self) -> float:
        return 1.0 - self.bit_accuracy

    def as_dict(self) -> dict:
        return {"psnr": self.psnr, "ssim": self.ssim,
                "bit_accuracy": self.bit_accuracy, "ber": self.ber}


def format_metric(value: float) -> str:
    """Serialize a metric for CSV/JSON; infinities become the string "inf"."""
    v = float(value)
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)
