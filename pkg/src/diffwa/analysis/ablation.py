"""Frequency-ablation probe and guidance-strength sweeps."""

from __future__ import annotations

from dataclasses import replace

import torch

from ..attack import AttackConfig, attack
from ..codec.models import WatermarkCodec, ber
from ..diffusion.model import Denoiser
from ..guidance import GuidanceConfig
from .haar import BAND_NAMES, haar_decompose, haar_reconstruct
from .metrics import MetricsRecord, psnr, ssim


def frequency_ablation(encoded: torch.Tensor, codec: WatermarkCodec, band: str,
                       bits: torch.Tensor) -> float:
    """BER after zeroing one subband of the encoded image and re-extracting.

    The zeroed-band reconstruction goes to the extractor as-is (no re-clamping:
    clamping would leak content back into the removed band, and the extractor
    is range-agnostic).
    """
    sb = haar_decompose(encoded)
    recon = haar_reconstruct(sb.zeroed(band))
    decoded = codec.extract(recon)
    return ber(decoded.bits, bits)


def frequency_ablation_table(encoded: torch.Tensor, codec: WatermarkCodec,
                             bits: torch.Tensor) -> dict[str, float]:
    """BER for each of the four subbands."""
    return {band: frequency_ablation(encoded, codec, band, bits) for band in BAND_NAMES}


def eta_sweep(x_en: torch.Tensor, originals: torch.Tensor, bits: torch.Tensor,
              denoiser: Denoiser, codec: WatermarkCodec, base: AttackConfig,
              metric: str, etas: list[float]) -> list[dict]:
    """Attack once per guidance strength and collect fidelity/BER rows.

    Every run reuses the same seed bundle, so the eta = 0 row is exactly the
    unguided attack.
    """
    rows = []
    for eta in etas:
        cfg = replace(base, guidance=GuidanceConfig(metric=metric, eta=float(eta)))
        cleaned = attack(x_en, denoiser, cfg)
        decoded = codec.extract(cleaned)
        record = MetricsRecord(psnr=psnr(cleaned, originals), ssim=ssim(cleaned, originals),
                               bit_accuracy=float((decoded.bits == bits).float().mean()))
        rows.append({"eta": float(eta), **record.as_dict()})
    return rows
