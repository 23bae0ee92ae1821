"""Denoiser wrapper: a noise-prediction network bound to its training schedule."""

from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigurationError, ValidationError
from .schedule import NoiseSchedule, make_schedule
from .unet import UNet

VARIANCE_KINDS = ("posterior", "beta")


@dataclass
class ModelOutput:
    """One reverse-step prediction: noise estimate, implied mean, and variance.

    ``sigma_sq`` is the scalar per-step reverse variance the sampler will use
    (posterior variance by default, hence exactly zero at t=1).
    """

    eps: torch.Tensor
    mu: torch.Tensor
    sigma_sq: float


@dataclass(frozen=True)
class DenoiserConfig:
    conditional: bool = False
    image_channels: int = 3
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2)
    emb_dim: int = 128
    variance: str = "posterior"

    def __post_init__(self):
        if self.variance not in VARIANCE_KINDS:
            raise ConfigurationError(f"variance must be one of {VARIANCE_KINDS}")


class Denoiser:
    """A trained (or initialized) noise predictor plus the schedule it assumes.

    The wrapper is read-only after training: sampling methods never mutate
    parameters, so one instance may serve concurrent evaluations.
    """

    def __init__(self, config: DenoiserConfig, schedule: NoiseSchedule, net: UNet | None = None):
        self.config = config
        self.schedule = schedule
        in_ch = config.image_channels * (2 if config.conditional else 1)
        self.net = net if net is not None else UNet(
            in_channels=in_ch, out_channels=config.image_channels,
            base_channels=config.base_channels, channel_mults=config.channel_mults,
            emb_dim=config.emb_dim)

    @property
    def conditional(self) -> bool:
        return self.config.conditional

    @torch.no_grad()
    def predict_eps(self, x_t: torch.Tensor, t, cond: torch.Tensor | None = None) -> torch.Tensor:
        """Raw noise prediction; ``t`` is a scalar step or per-sample tensor."""
        if self.conditional:
            if cond is None:
                raise ConfigurationError("conditional denoiser called without a conditioning image")
            if cond.shape != x_t.shape:
                raise ValidationError(
                    f"conditioning shape {tuple(cond.shape)} != state shape {tuple(x_t.shape)}")
            inp = torch.cat([cond, x_t], dim=1)
        else:
            if cond is not None:
                raise ConfigurationError("unconditional denoiser given a conditioning image")
            inp = x_t
        if not isinstance(t, torch.Tensor):
            t = torch.full((x_t.shape[0],), int(t), dtype=torch.long)
        return self.net(inp.float(), t).to(x_t.dtype)

    def predict(self, x_t: torch.Tensor, t: int, cond: torch.Tensor | None = None) -> ModelOutput:
        """Full reverse-step output at scalar step ``t``: eps, mean, variance."""
        t = self.schedule.check_t(t)
        eps = self.predict_eps(x_t, t, cond)
        mu = mean_from_eps(eps, x_t, t, self.schedule)
        if self.config.variance == "posterior":
            sigma_sq = float(self.schedule.posterior_var[t])
        else:
            sigma_sq = float(self.schedule.beta[t])
        return ModelOutput(eps=eps, mu=mu, sigma_sq=sigma_sq)


def mean_from_eps(eps: torch.Tensor, x_t: torch.Tensor, t: int, schedule: NoiseSchedule) -> torch.Tensor:
    """Reverse-step mean implied by a noise prediction:
    (x_t - beta_t/sqrt(1-abar_t) * eps) / sqrt(alpha_t).
    """
    t = schedule.check_t(t)
    beta = schedule.beta[t].to(x_t.dtype)
    abar = schedule.alpha_bar[t].to(x_t.dtype)
    alpha = schedule.alpha[t].to(x_t.dtype)
    return (x_t - beta / (1.0 - abar).sqrt() * eps) / alpha.sqrt()


def denoiser_state(denoiser: Denoiser) -> dict:
    """Serializable checkpoint payload (plain types and tensors only)."""
    cfg = denoiser.config
    return {
        "conditional": cfg.conditional,
        "image_channels": cfg.image_channels,
        "base_channels": cfg.base_channels,
        "channel_mults": list(cfg.channel_mults),
        "emb_dim": cfg.emb_dim,
        "variance": cfg.variance,
        "schedule": denoiser.schedule.config(),
        "weights": denoiser.net.state_dict(),
    }


def denoiser_from_state(state: dict) -> Denoiser:
    cfg = DenoiserConfig(
        conditional=bool(state["conditional"]),
        image_channels=int(state["image_channels"]),
        base_channels=int(state["base_channels"]),
        channel_mults=tuple(state["channel_mults"]),
        emb_dim=int(state["emb_dim"]),
        variance=state["variance"],
    )
    schedule = make_schedule(state["schedule"]["T"], state["schedule"]["kind"])
    denoiser = Denoiser(cfg, schedule)
    denoiser.net.load_state_dict(state["weights"])
    denoiser.net.eval()
    return denoiser
