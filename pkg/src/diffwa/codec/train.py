"""Joint training of the watermark encoder/decoder with an adversary."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F

from ..errors import TrainingError, ValidationError
from ..seeds import SeedStreams
from .models import CodecConfig, WatermarkCodec, bit_accuracy, random_bits
from .noise_layers import NoiseLayerSpec, apply_noise_layer


@dataclass(frozen=True)
class CodecTrainConfig:
    codec: CodecConfig = field(default_factory=CodecConfig)
    epochs: int = 30
    batch_size: int = 32
    lr: float = 1e-3
    image_weight: float = 0.7
    message_weight: float = 1.0
    adversarial_weight: float = 0.001
    # Steps with the image loss disabled: the pair first agrees on a loud
    # code, then fidelity pressure shrinks its amplitude.
    warmup_steps: int = 0
    # One layer is drawn per batch. The real-JPEG kind is swapped for its
    # differentiable surrogate here so gradients reach the encoder.
    noise_layers: tuple[NoiseLayerSpec, ...] = (NoiseLayerSpec("identity"),)
    seed: int = 0
    log_every: int = 10


def train_codec(images: torch.Tensor, config: CodecTrainConfig,
                log_path=None) -> WatermarkCodec:
    """Train embedder, extractor, and adversary jointly on ``images``.

    Each step draws fresh payloads, embeds them, pushes the encoded batch
    through one randomly chosen noise layer, and regresses the payload from
    the distorted result. Per-step loss terms and batch bit accuracy are
    recorded (and optionally written as CSV rows). A non-finite loss aborts
    with the last epoch-end parameters attached to the error.
    """
    if images.numel() == 0:
        raise ValidationError("training set is empty")
    streams = SeedStreams(config.seed)
    torch.manual_seed(streams.seed("init"))
    codec = WatermarkCodec(config.codec)

    layers = tuple(
        NoiseLayerSpec("jpeg_mask", quality=spec.quality) if spec.kind == "jpeg" else spec
        for spec in config.noise_layers)

    n = images.shape[0]
    enc_dec_params = list(codec.encoder.parameters()) + list(codec.decoder.parameters())
    opt = torch.optim.Adam(enc_dec_params, lr=config.lr)
    opt_disc = torch.optim.Adam(codec.discriminator.parameters(), lr=config.lr)
    order_gen = streams.generator("data")
    bits_gen = streams.generator("init")
    noise_streams = SeedStreams(streams.seed("diffusion"))

    history: list[dict] = []
    last_good = codec.state()
    real = torch.ones(0)

    codec.encoder.train(), codec.decoder.train(), codec.discriminator.train()
    step = 0
    for epoch in range(config.epochs):
        perm = torch.randperm(n, generator=order_gen)
        for lo in range(0, n, config.batch_size):
            x = images[perm[lo:lo + config.batch_size]]
            bits = random_bits(x.shape[0], config.codec.message_len, bits_gen)
            encoded = codec.encoder(x, bits)

            layer_idx = int(torch.randint(0, len(layers), (1,), generator=order_gen))
            noised = apply_noise_layer(encoded, layers[layer_idx],
                                       noise_streams.seed(f"step{step}"), cover=x)
            if noised.shape[2:] != encoded.shape[2:]:
                # crop layer shrinks the image; the extractor reads a fixed size
                noised = F.interpolate(noised, size=encoded.shape[2:],
                                       mode="bilinear", align_corners=False)
            decoded = codec.decoder(noised)

            if real.shape[0] != x.shape[0]:
                real = torch.ones(x.shape[0], 1)
            loss_image = F.mse_loss(encoded, x)
            loss_message = F.mse_loss(decoded, bits)
            loss_adv = F.binary_cross_entropy_with_logits(codec.discriminator(encoded), real)
            image_weight = 0.0 if step < config.warmup_steps else config.image_weight
            loss = (image_weight * loss_image
                    + config.message_weight * loss_message
                    + config.adversarial_weight * loss_adv)
            if not math.isfinite(loss.item()):
                raise TrainingError(f"non-finite codec loss at epoch {epoch} step {step}",
                                    last_good=last_good)
            opt.zero_grad()
            loss.backward()
            opt.step()

            d_real = codec.discriminator(x)
            d_fake = codec.discriminator(encoded.detach())
            loss_disc = (F.binary_cross_entropy_with_logits(d_real, real)
                         + F.binary_cross_entropy_with_logits(d_fake, torch.zeros_like(d_fake)))
            opt_disc.zero_grad()
            loss_disc.backward()
            opt_disc.step()

            if step % config.log_every == 0:
                history.append({
                    "epoch": epoch, "step": step,
                    "loss_image": loss_image.item(), "loss_message": loss_message.item(),
                    "loss_adversarial": loss_adv.item(),
                    "bit_accuracy": bit_accuracy((decoded > 0.5).float(), bits),
                })
            step += 1
        last_good = codec.state()

    codec.eval()
    codec.train_history = history
    if log_path is not None:
        _write_log(log_path, history)
    return codec


def _write_log(path, history):
    fields = ["epoch", "step", "loss_image", "loss_message", "loss_adversarial", "bit_accuracy"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for row in history:
            writer.writerow(row)
