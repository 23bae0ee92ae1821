"""Single reverse steps for the stochastic and deterministic samplers.

Both functions are pure: given the same inputs (and generator state for the
stochastic step) they return bit-identical results.
"""

from __future__ import annotations

import torch

from ..errors import NumericError
from .model import ModelOutput
from .schedule import NoiseSchedule


def ddpm_step(out: ModelOutput, x_t: torch.Tensor, t: int, schedule: NoiseSchedule,
              generator: torch.Generator | None = None) -> torch.Tensor:
    """Ancestral step: sample mu + sigma_t * z. The final step (t=1) adds no noise."""
    t = schedule.check_t(t)
    if out.sigma_sq < 0:
        raise NumericError(f"negative reverse variance {out.sigma_sq} at t={t}")
    if t == 1 or out.sigma_sq == 0.0:
        return out.mu
    z = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype)
    return out.mu + out.sigma_sq ** 0.5 * z


def ddim_step(eps_hat: torch.Tensor, x_t: torch.Tensor, t: int, schedule: NoiseSchedule) -> torch.Tensor:
    """Deterministic step: project to the x0 estimate and re-noise to level t-1."""
    t = schedule.check_t(t)
    abar_t = schedule.alpha_bar[t].to(x_t.dtype)
    abar_prev = schedule.alpha_bar[t - 1].to(x_t.dtype)
    x0_hat = (x_t - (1.0 - abar_t).sqrt() * eps_hat) / abar_t.sqrt()
    return abar_prev.sqrt() * x0_hat + (1.0 - abar_prev).sqrt() * eps_hat
