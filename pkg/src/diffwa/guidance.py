"""Distance-guided sampling primitives.

A reverse step can be steered toward a reference image by shifting the
step against the gradient of a distance between the current state and a
noised copy of the reference. Two transforms implement this: a mean shift
for the stochastic sampler and a noise-prediction correction for the
deterministic one. Both scale with a time-dependent factor derived from a
single strength hyperparameter ``eta``.

All functions here are pure and safe for concurrent use.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import torch

from ._ssim import ssim_per_image
from .diffusion.schedule import NoiseSchedule
from .errors import NumericError, ValidationError

METRICS = ("mse", "neg_ssim", "none")

# Largest distance for which 1 - tanh(D) stays above 1e-12.
_SATURATION_LIMIT = math.atanh(1.0 - 1e-12)


class SaturationWarning(UserWarning):
    """The tanh closeness weight saturated; the distance was clamped."""


@dataclass(frozen=True)
class GuidanceConfig:
    """Which distance to follow and how hard.

    ``eta`` is the signed strength (the ratio of the raw scale hyperparameter
    to the watermark-bound constant, collapsed into one knob); ``metric`` of
    "none" or ``eta == 0`` disables guidance entirely. ``reference`` may be
    left unset, in which case the attack input serves as the reference.
    """

    metric: str = "none"
    eta: float = 0.0
    reference: torch.Tensor | None = None

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValidationError(f"unknown guidance metric {self.metric!r}; expected {METRICS}")

    @property
    def enabled(self) -> bool:
        return self.metric != "none" and self.eta != 0.0


@dataclass(frozen=True)
class DistanceResult:
    """Per-image distance values [B] and the gradient wrt the first argument."""

    value: torch.Tensor
    gradient: torch.Tensor


def mse_distance(x: torch.Tensor, y: torch.Tensor) -> DistanceResult:
    """Mean squared error per image with its analytic gradient 2(x-y)/numel."""
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")
    diff = x - y
    per_image_numel = diff[0].numel() if diff.ndim > 1 else diff.numel()
    value = (diff ** 2).reshape(diff.shape[0], -1).mean(dim=1) if diff.ndim > 1 \
        else (diff ** 2).mean().unsqueeze(0)
    return DistanceResult(value=value, gradient=2.0 * diff / per_image_numel)


def ssim_distance(x: torch.Tensor, y: torch.Tensor, window_size: int = 11) -> DistanceResult:
    """Negated structural similarity per image; gradient via autodifferentiation."""
    x_req = x.detach().requires_grad_(True)
    value = -ssim_per_image(x_req, y.detach(), window_size=window_size)
    (grad,) = torch.autograd.grad(value.sum(), x_req)
    return DistanceResult(value=value.detach(), gradient=grad)


def distance(metric: str, x: torch.Tensor, y: torch.Tensor, window_size: int = 11) -> DistanceResult:
    if metric == "mse":
        return mse_distance(x, y)
    if metric == "neg_ssim":
        return ssim_distance(x, y, window_size=window_size)
    raise ValidationError(f"unknown guidance metric {metric!r}; expected {METRICS}")


def gradient_scale(t: int, eta: float, schedule: NoiseSchedule) -> float:
    """Time-dependent guidance strength: 3 * eta * sqrt(1-abar_t) / sqrt(abar_t)."""
    t = schedule.check_t(t)
    abar = float(schedule.alpha_bar[t])
    return 3.0 * eta * math.sqrt(1.0 - abar) / math.sqrt(abar)


def noised_reference(x_en: torch.Tensor, t: int, schedule: NoiseSchedule,
                     rng: int | torch.Generator) -> torch.Tensor:
    """Reference at the sampler's current noise level: sqrt(abar_t) x_en +
    sqrt(1-abar_t) eps, with eps drawn fresh on every call."""
    t = schedule.check_t(t)
    if isinstance(rng, torch.Generator):
        gen = rng
    else:
        gen = torch.Generator()
        gen.manual_seed(int(rng))
    abar = schedule.alpha_bar[t].to(x_en.dtype)
    eps = torch.randn(x_en.shape, generator=gen, dtype=x_en.dtype)
    return abar.sqrt() * x_en + (1.0 - abar).sqrt() * eps


def guided_ddpm_mean(mu: torch.Tensor, sigma_sq: float, x_t: torch.Tensor,
                     x_en_t: torch.Tensor, s: float, metric: str) -> torch.Tensor:
    """Shift the reverse mean by -s * Sigma * grad D(x_t, reference_t)."""
    if s == 0.0 or metric == "none":
        return mu
    d = distance(metric, x_t, x_en_t)
    return mu - s * sigma_sq * d.gradient


def log_closeness(x: torch.Tensor, y: torch.Tensor, metric: str = "mse") -> DistanceResult:
    """log(1 - tanh(D(x, y))) and its gradient wrt ``x``.

    The gradient has the closed form -(1 + tanh(D)) * grad D, so the
    normalization constant of the underlying closeness weight never appears.
    Distances are clamped where 1 - tanh(D) would drop below 1e-12; a
    :class:`SaturationWarning` reports the clamp.
    """
    d = distance(metric, x, y)
    val = d.value
    if bool((val > _SATURATION_LIMIT).any()):
        warnings.warn("distance saturated tanh closeness; clamping", SaturationWarning,
                      stacklevel=2)
        val = val.clamp(max=_SATURATION_LIMIT)
    tanh_d = torch.tanh(val)
    factor = -(1.0 + tanh_d).view(-1, *([1] * (x.ndim - 1)))
    return DistanceResult(value=torch.log1p(-tanh_d), gradient=factor * d.gradient)


def guided_epsilon(eps: torch.Tensor, x_t: torch.Tensor, x_en_t: torch.Tensor,
                   s: float, alpha_bar_t: float, metric: str) -> torch.Tensor:
    """Noise-prediction correction for the deterministic sampler:
    eps - sqrt(1-abar_t) * s * grad log(1 - tanh(D(reference_t, x_t)))."""
    if s == 0.0 or metric == "none":
        return eps
    lc = log_closeness(x_t, x_en_t, metric)
    return eps - math.sqrt(1.0 - alpha_bar_t) * s * lc.gradient


def score_from_eps(eps: torch.Tensor, alpha_bar_t: float) -> torch.Tensor:
    """Score (gradient of the log density) implied by a noise prediction:
    -eps / sqrt(1 - abar_t). Guarded against abar_t = 1."""
    if alpha_bar_t >= 1.0:
        raise NumericError("score undefined at alpha_bar = 1 (zero noise level)")
    return -eps / math.sqrt(1.0 - alpha_bar_t)
