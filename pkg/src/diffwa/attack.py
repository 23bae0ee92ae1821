"""Watermark-removal attacks built on partial diffusion.

The basic procedure noises the encoded image part-way up the chain (depth
``partial_depth``), then denoises back to a clean image with a conditional
or unconditional model, optionally steering each step with distance
guidance; the whole round trip repeats ``loops`` times, each loop consuming
the previous loop's output while conditioning and guidance stay anchored to
the original encoded input. An estimator variant replaces the forward pass
and most of the reverse chain with a learned jump to a shallow noisy state.

A single attack is sequential over timesteps; attacks on disjoint batches
are safe to run concurrently. All randomness flows from the config seed
through named streams, so a run is bitwise reproducible and disabling
guidance never perturbs the sampler's own draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import torch
import torch.nn as nn

from ._coords import N_COORD_FEATURES, coordinate_features
from .diffusion.model import Denoiser, ModelOutput
from .diffusion.sampling import ddim_step, ddpm_step
from .diffusion.schedule import NoiseSchedule, forward_diffuse
from .errors import ConfigurationError, TrainingError, ValidationError
from .guidance import GuidanceConfig, gradient_scale, guided_ddpm_mean, guided_epsilon, noised_reference
from .seeds import SeedStreams

SAMPLERS = ("ddpm", "ddim")


@dataclass(frozen=True)
class AttackConfig:
    sampler: str = "ddpm"
    conditional: bool = True
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    loops: int = 2
    partial_depth: int = 40
    estimator_depth: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ConfigurationError(f"unknown sampler {self.sampler!r}; expected {SAMPLERS}")
        if self.loops < 0:
            raise ConfigurationError("loop count must be >= 0")


def _check_setup(denoiser: Denoiser, cfg: AttackConfig, depth: int):
    if cfg.conditional != denoiser.conditional:
        raise ConfigurationError(
            f"config conditional={cfg.conditional} but denoiser conditional={denoiser.conditional}")
    if not 0 <= depth <= denoiser.schedule.T:
        raise ConfigurationError(
            f"denoising depth {depth} outside the denoiser's schedule (T={denoiser.schedule.T})")


def _denoise(x_t: torch.Tensor, depth: int, denoiser: Denoiser, cfg: AttackConfig,
             reference: torch.Tensor, sample_gen: torch.Generator,
             guide_gen: torch.Generator) -> torch.Tensor:
    """Run ``depth`` guided reverse steps starting from ``x_t``."""
    schedule = denoiser.schedule
    guide = cfg.guidance
    cond = reference if cfg.conditional else None
    for t in range(depth, 0, -1):
        out = denoiser.predict(x_t, t, cond)
        if guide.enabled:
            s = gradient_scale(t, guide.eta, schedule)
            ref_t = noised_reference(reference, t, schedule, guide_gen)
            if cfg.sampler == "ddpm":
                mu = guided_ddpm_mean(out.mu, out.sigma_sq, x_t, ref_t, s, guide.metric)
                out = ModelOutput(eps=out.eps, mu=mu, sigma_sq=out.sigma_sq)
            else:
                eps_hat = guided_epsilon(out.eps, x_t, ref_t, s,
                                         float(schedule.alpha_bar[t]), guide.metric)
                out = ModelOutput(eps=eps_hat, mu=out.mu, sigma_sq=out.sigma_sq)
        if cfg.sampler == "ddpm":
            x_t = ddpm_step(out, x_t, t, schedule, generator=sample_gen)
        else:
            x_t = ddim_step(out.eps, x_t, t, schedule)
    return x_t


def attack(x_en: torch.Tensor, denoiser: Denoiser, cfg: AttackConfig,
           collect_loops: list | None = None) -> torch.Tensor:
    """Remove the embedded payload from ``x_en``; returns images in [0, 1].

    With ``loops == 0`` the input is returned unchanged. If ``collect_loops``
    is a list, a clamped snapshot of each loop's output is appended to it.
    Intermediate states are never clamped; only the returned batch is.
    """
    _check_setup(denoiser, cfg, cfg.partial_depth)
    if cfg.loops == 0:
        return x_en.clone()
    reference = cfg.guidance.reference if cfg.guidance.reference is not None else x_en
    if reference.shape != x_en.shape:
        raise ValidationError("guidance reference must match the input shape")

    streams = SeedStreams(cfg.seed)
    sample_gen = streams.generator("diffusion")
    guide_gen = streams.generator("guidance-reference")

    x = x_en
    for _ in range(cfg.loops):
        eps = torch.randn(x.shape, generator=sample_gen, dtype=x.dtype)
        x_t = forward_diffuse(x, cfg.partial_depth, eps, denoiser.schedule)
        x = _denoise(x_t, cfg.partial_depth, denoiser, cfg, reference, sample_gen, guide_gen)
        if collect_loops is not None:
            collect_loops.append(x.clamp(0.0, 1.0))
    return x.clamp(0.0, 1.0)


class EstimatorNet(nn.Module):
    """Residual convolutional map to a shallow noisy state: no pooling, no
    fully connected head. ``anchor`` scales the input skip to the target
    noise level's signal scale, so the zero-initialized net starts at the
    scaled identity. Coordinate channels give it the positional sensitivity
    needed to strip position-locked watermark patterns."""

    def __init__(self, channels: int = 32, blocks: int = 4, anchor: float = 1.0):
        super().__init__()
        self.anchor = anchor
        layers: list[nn.Module] = [
            nn.Conv2d(3 + N_COORD_FEATURES, channels, 3, padding=1), nn.SiLU()]
        for _ in range(blocks):
            layers += [nn.Conv2d(channels, channels, 3, padding=1), nn.SiLU()]
        self.body = nn.Sequential(*layers)
        self.out = nn.Conv2d(channels, 3, 3, padding=1)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, x):
        coords = coordinate_features(x.shape[2], x.shape[3], x.dtype)
        inp = torch.cat([x, coords.expand(x.shape[0], -1, -1, -1)], dim=1)
        return self.anchor * x + self.out(self.body(inp))


class Estimator:
    """Trained jump network bound to its diffusion depth and schedule."""

    def __init__(self, net: EstimatorNet, depth: int, schedule_config: dict):
        self.net = net
        self.depth = depth
        self.schedule_config = schedule_config

    def __call__(self, x_en: torch.Tensor) -> torch.Tensor:
        self.net.eval()
        with torch.no_grad():
            return self.net(x_en.float()).to(x_en.dtype)

    def state(self) -> dict:
        first_conv = self.net.body[0]
        return {"depth": self.depth, "schedule": dict(self.schedule_config),
                "channels": first_conv.out_channels,
                "blocks": (len(self.net.body) - 2) // 2,
                "anchor": self.net.anchor,
                "weights": self.net.state_dict()}

    @classmethod
    def from_state(cls, state: dict) -> "Estimator":
        net = EstimatorNet(channels=int(state["channels"]), blocks=int(state["blocks"]),
                           anchor=float(state["anchor"]))
        net.load_state_dict(state["weights"])
        net.eval()
        return cls(net, int(state["depth"]), state["schedule"])


@dataclass(frozen=True)
class EstimatorTrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    channels: int = 32
    blocks: int = 4
    seed: int = 0
    log_every: int = 25


def train_estimator(images: torch.Tensor, conditions: torch.Tensor, depth: int,
                    schedule: NoiseSchedule, config: EstimatorTrainConfig) -> Estimator:
    """Regress from encoded images to step-``depth`` noisy originals.

    Targets are fresh forward-noised samples of the clean images each step;
    plain L2 regression. ``depth == 0`` degenerates to clean-image
    restoration.
    """
    if conditions.shape != images.shape:
        raise ValidationError("conditioning batch must align with the image batch")
    if not 0 <= depth <= schedule.T:
        raise ValidationError(f"estimator depth {depth} outside [0, {schedule.T}]")
    streams = SeedStreams(config.seed)
    anchor = float(schedule.alpha_bar[depth].sqrt()) if depth > 0 else 1.0
    torch.manual_seed(streams.seed("init"))
    net = EstimatorNet(channels=config.channels, blocks=config.blocks, anchor=anchor)

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
            x, x_en = images[idx], conditions[idx]
            if depth > 0:
                eps = torch.randn(x.shape, generator=noise_gen, dtype=x.dtype)
                target = forward_diffuse(x, depth, eps, schedule)
            else:
                target = x
            loss = torch.mean((net(x_en) - target) ** 2)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite estimator loss at epoch {epoch} step {step}",
                                    last_good=last_good)
            opt.zero_grad()
            loss.backward()
            opt.step()
            if step % config.log_every == 0 or step == total_steps - 1:
                history.append({"epoch": epoch, "step": step, "loss": loss.item()})
            step += 1
        last_good = {k: v.clone() for k, v in net.state_dict().items()}

    net.eval()
    est = Estimator(net, depth, schedule.config())
    est.train_history = history
    return est


def attack_with_estimator(x_en: torch.Tensor, estimator: Estimator, denoiser: Denoiser,
                          cfg: AttackConfig) -> torch.Tensor:
    """Jump to the estimator's noisy state, then denoise those few steps."""
    if cfg.estimator_depth is None or cfg.estimator_depth != estimator.depth:
        raise ConfigurationError(
            f"config estimator_depth={cfg.estimator_depth} but estimator was trained "
            f"for depth {estimator.depth}")
    if estimator.schedule_config != denoiser.schedule.config():
        raise ConfigurationError(
            f"estimator schedule {estimator.schedule_config} does not match denoiser "
            f"schedule {denoiser.schedule.config()}")
    _check_setup(denoiser, cfg, estimator.depth)
    reference = cfg.guidance.reference if cfg.guidance.reference is not None else x_en

    streams = SeedStreams(cfg.seed)
    sample_gen = streams.generator("diffusion")
    guide_gen = streams.generator("guidance-reference")
    x_t = estimator(x_en)
    x = _denoise(x_t, estimator.depth, denoiser, cfg, reference, sample_gen, guide_gen)
    return x.clamp(0.0, 1.0)


def combinatorial_attack(x_en: torch.Tensor, stage1: Callable[[torch.Tensor], torch.Tensor],
                         stage2_denoiser: Denoiser, cfg: AttackConfig) -> torch.Tensor:
    """Two-stage removal: preprocess with ``stage1`` (any attack closure),
    then attack the shifted distribution with a second conditional model that
    was trained on stage-1 outputs. Conditioning and guidance anchor to the
    stage-1 output, matching the second model's training condition."""
    x_latent = stage1(x_en)
    if x_latent.shape != x_en.shape:
        raise ValidationError("stage-1 output must keep the input shape")
    return attack(x_latent, stage2_denoiser, cfg)
