from .metrics import MetricsRecord, format_metric, psnr, psnr_per_image, ssim, ssim_per_image
from .haar import BAND_NAMES, Subbands, haar_decompose, haar_reconstruct
from .distortions import DISTORTION_KINDS, apply_distortion, distortion_suite
from .ablation import eta_sweep, frequency_ablation, frequency_ablation_table

__all__ = [
    "MetricsRecord", "format_metric", "psnr", "psnr_per_image", "ssim", "ssim_per_image",
    "BAND_NAMES", "Subbands", "haar_decompose", "haar_reconstruct",
    "DISTORTION_KINDS", "apply_distortion", "distortion_suite",
    "eta_sweep", "frequency_ablation", "frequency_ablation_table",
]
