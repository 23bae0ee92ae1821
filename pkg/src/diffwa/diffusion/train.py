"""Denoiser training: plain noise-prediction loss, unconditional or image-conditioned."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch

from ..errors import TrainingError, ValidationError
from ..seeds import SeedStreams
from .model import Denoiser, DenoiserConfig
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class DiffusionTrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 2e-4
    seed: int = 0
    base_channels: int = 32
    channel_mults: tuple[int, ...] = (1, 2)
    variance: str = "posterior"
    p_norm: float = 2.0
    log_every: int = 25


def train_unconditional(images: torch.Tensor, schedule: NoiseSchedule,
                        config: DiffusionTrainConfig) -> Denoiser:
    """Fit eps(x_t, t) to the true noise over uniformly sampled timesteps."""
    return _train(images, None, schedule, config, conditional=False)


def train_conditional(images: torch.Tensor, conditions: torch.Tensor, schedule: NoiseSchedule,
                      config: DiffusionTrainConfig) -> Denoiser:
    """Fit eps(cond, x_t, t); ``conditions`` are aligned with ``images`` row by row."""
    if conditions.shape != images.shape:
        raise ValidationError("conditioning batch must align with the image batch")
    return _train(images, conditions, schedule, config, conditional=True)


def _train(images, conditions, schedule, config, conditional):
    if images.numel() == 0:
        raise ValidationError("training set is empty")
    streams = SeedStreams(config.seed)

    torch.manual_seed(streams.seed("init"))
    denoiser = Denoiser(
        DenoiserConfig(conditional=conditional, base_channels=config.base_channels,
                       channel_mults=config.channel_mults, variance=config.variance),
        schedule)
    net = denoiser.net

    n = images.shape[0]
    opt = torch.optim.Adam(net.parameters(), lr=config.lr)
    order_gen = streams.generator("data")
    noise_gen = streams.generator("diffusion")
    history: list[dict] = []
    last_good = {k: v.clone() for k, v in net.state_dict().items()}
    total_steps = config.epochs * ((n + config.batch_size - 1) // config.batch_size)

    net.train()
    step = 0
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=order_gen)
        for lo in range(0, n, config.batch_size):
            idx = perm[lo:lo + config.batch_size]
            x = images[idx]
            t = torch.randint(1, schedule.T + 1, (x.shape[0],), generator=noise_gen)
            eps = torch.randn(x.shape, generator=noise_gen, dtype=x.dtype)
            abar = schedule.alpha_bar[t].to(x.dtype).view(-1, 1, 1, 1)
            x_t = abar.sqrt() * x + (1.0 - abar).sqrt() * eps

            inp = torch.cat([conditions[idx], x_t], dim=1) if conditional else x_t
            pred = net(inp, t)
            if config.p_norm == 2.0:
                loss = torch.mean((pred - eps) ** 2)
            else:
                loss = torch.mean(torch.abs(pred - eps) ** config.p_norm)

            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite loss at epoch {epoch} step {step}",
                                    last_good=last_good)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if step % config.log_every == 0 or step == total_steps - 1:
                history.append({"epoch": epoch, "step": step, "loss": loss.item()})
            step += 1
        last_good = {k: v.clone() for k, v in net.state_dict().items()}

    net.eval()
    denoiser.train_history = history
    return denoiser
