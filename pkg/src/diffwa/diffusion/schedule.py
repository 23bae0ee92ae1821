"""Noise schedules and the closed-form forward noising process."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from ..errors import ValidationError

SCHEDULE_KINDS = ("linear", "cosine")

# Standard linear-schedule endpoints; kept fixed regardless of T.
LINEAR_BETA_START = 1e-4
LINEAR_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep noising constants for a T-step chain.

    All vectors have length T+1 and are indexed by timestep, with index 0 a
    ``t=0`` sentinel (beta=0, alpha=1, alpha_bar=1) so that ``alpha_bar[t-1]``
    is valid at t=1. Stored in float64; samplers cast to the image dtype.
    Instances are immutable and safe to share across threads.
    """

    T: int
    kind: str
    beta: torch.Tensor
    alpha: torch.Tensor
    alpha_bar: torch.Tensor
    # Posterior variance of the reverse chain, beta_tilde_t; zero at t=1.
    posterior_var: torch.Tensor = field(repr=False, default=None)

    def __post_init__(self):
        if self.posterior_var is None:
            pvar = self.beta.clone()
            pvar[1:] = (1.0 - self.alpha_bar[:-1]) / (1.0 - self.alpha_bar[1:]) * self.beta[1:]
            pvar[0] = 0.0
            object.__setattr__(self, "posterior_var", pvar)

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ValidationError(f"timestep t={t} outside [1, {self.T}]")
        return t

    def config(self) -> dict:
        """Plain-dict echo used to detect schedule mismatch across checkpoints."""
        return {"T": self.T, "kind": self.kind}


def make_schedule(T: int, kind: str = "linear") -> NoiseSchedule:
    """Build a T-step schedule. ``kind`` is "linear" (default) or "cosine"."""
    if int(T) < 1:
        raise ValidationError(f"schedule needs T >= 1, got {T}")
    T = int(T)
    if kind == "linear":
        beta_core = torch.linspace(LINEAR_BETA_START, LINEAR_BETA_END, T, dtype=torch.float64)
    elif kind == "cosine":
        s = 0.008
        steps = torch.arange(T + 1, dtype=torch.float64)
        f = torch.cos((steps / T + s) / (1 + s) * math.pi / 2) ** 2
        abar = f / f[0]
        beta_core = (1 - abar[1:] / abar[:-1]).clamp(1e-8, 0.999)
    else:
        raise ValidationError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}")

    beta = torch.zeros(T + 1, dtype=torch.float64)
    beta[1:] = beta_core
    alpha = 1.0 - beta
    alpha_bar = torch.cumprod(alpha, dim=0)
    return NoiseSchedule(T=T, kind=kind, beta=beta, alpha=alpha, alpha_bar=alpha_bar)


def forward_diffuse(x0: torch.Tensor, t, eps: torch.Tensor, schedule: NoiseSchedule) -> torch.Tensor:
    """Noise ``x0`` directly to step ``t``: sqrt(abar_t) x0 + sqrt(1-abar_t) eps.

    No clamping is applied; the result may leave [0, 1]. ``t`` is either a
    scalar step or a per-sample integer tensor (used during training).
    """
    if eps.shape != x0.shape:
        raise ValidationError(f"noise shape {tuple(eps.shape)} != image shape {tuple(x0.shape)}")
    if isinstance(t, torch.Tensor) and t.ndim > 0:
        if not bool(((t >= 1) & (t <= schedule.T)).all()):
            raise ValidationError(f"timesteps outside [1, {schedule.T}]")
        abar = schedule.alpha_bar[t].to(x0.dtype)
        abar = abar.view(-1, *([1] * (x0.ndim - 1)))
    else:
        abar_t = schedule.alpha_bar[schedule.check_t(t)]
        abar = abar_t.to(x0.dtype)
    return abar.sqrt() * x0 + (1.0 - abar).sqrt() * eps
