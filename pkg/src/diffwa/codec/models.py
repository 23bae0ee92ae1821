"""Watermark embedder/extractor networks and the public codec surface.

The encoder writes a learned residual onto the image; the decoder regresses
the payload bits from the (possibly distorted) image; a small discriminator
plays the adversary during training. The codec object wrapping them is
immutable after training: ``embed``/``extract`` run under ``no_grad`` in
eval mode and may be called concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .._coords import N_COORD_FEATURES, coordinate_features
from .._haar import Subbands, haar_decompose, haar_reconstruct
from ..errors import ConfigurationError, ValidationError


class ConvBNRelu(nn.Module):
    """Conv 3x3 + BatchNorm + ReLU, the standard watermarking building block."""

    def __init__(self, channels_in, channels_out, stride=1):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(channels_in, channels_out, 3, stride, padding=1),
            nn.BatchNorm2d(channels_out),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.layers(x)


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.bn2 = nn.BatchNorm2d(channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        h = self.act(self.bn1(self.conv1(x)))
        h = self.bn2(self.conv2(h))
        return self.act(h + x)


@dataclass(frozen=True)
class CodecConfig:
    image_size: int = 32
    message_len: int = 30
    channels: int = 32
    encoder_blocks: int = 2
    decoder_blocks: int = 3
    discriminator_blocks: int = 2


def band_pairs(message_len: int) -> torch.Tensor:
    """Per-bit (carrier_band, mate_band) assignment, cycling over all six
    unordered band pairs so each band backs half the payload."""
    pairs = torch.tensor([[0, 1], [2, 3], [0, 3], [1, 2], [0, 2], [1, 3]])
    return pairs[torch.arange(message_len) % 6]


class WatermarkEncoder(nn.Module):
    """Writes a message-dependent residual onto the image.

    Each bit is carried by a pair of learned wavelet-domain patterns in two
    different subbands: a bit-independent carrier and a mate whose sign
    encodes the bit. Decoding multiplies the two band projections, so the
    payload lives in cross-band phase coherence rather than plain amplitude
    (removing any one subband erases the bits anchored there). A small
    content-adaptive convolutional correction rides on top. All residual
    parameters start at zero, so an untrained encoder returns the cover
    image unchanged.
    """

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        c = cfg.channels
        half = cfg.image_size // 2
        self.stem = ConvBNRelu(3, c)
        self.blocks = nn.Sequential(*[ResidualBlock(c) for _ in range(cfg.encoder_blocks)])
        self.msg_linear = nn.Linear(cfg.message_len, cfg.message_len)
        self.merge = ConvBNRelu(c + cfg.message_len + 3 + N_COORD_FEATURES, c)
        self.residual = nn.Conv2d(c, 3, 1)
        nn.init.zeros_(self.residual.weight)
        nn.init.zeros_(self.residual.bias)
        self.carriers = nn.Parameter(torch.zeros(cfg.message_len, 3, half, half))
        self.mates = nn.Parameter(torch.zeros(cfg.message_len, 3, half, half))
        self.register_buffer("pairs", band_pairs(cfg.message_len))

    def _code(self, bits):
        """Synthesize the wavelet-domain payload residual in pixel space."""
        L, _, half, _ = self.carriers.shape
        b = bits.shape[0]
        signs = (2.0 * bits - 1.0)
        coefs = bits.new_zeros(b, 4, 3, half, half)
        carrier_sum = coefs.new_zeros(4, 3, half, half)
        carrier_sum.index_add_(0, self.pairs[:, 0], self.carriers)
        coefs += carrier_sum
        mate_banded = coefs.new_zeros(L, 4, 3, half, half)
        mate_banded[torch.arange(L), self.pairs[:, 1]] = self.mates
        coefs = coefs + torch.einsum("bl,lkchw->bkchw", signs, mate_banded)
        return haar_reconstruct(Subbands(ll=coefs[:, 0], lh=coefs[:, 1],
                                         hl=coefs[:, 2], hh=coefs[:, 3]))

    def forward(self, image, bits):
        b, _, h, w = image.shape
        msg = self.msg_linear(bits)[:, :, None, None].expand(-1, -1, h, w)
        coords = coordinate_features(h, w, image.dtype).expand(b, -1, -1, -1)
        feat = self.blocks(self.stem(image))
        merged = self.merge(torch.cat([feat, msg, image, coords], dim=1))
        return (image + self._code(bits) + self.residual(merged)).clamp(0.0, 1.0)


class BandSuppressor(nn.Module):
    """Bias-free conv stack estimating the content inside one subband.

    Zero-preserving by construction (no bias, no normalization), so a zeroed
    subband still reads as exactly zero after suppression.
    """

    def __init__(self, channels: int, depth: int = 2):
        super().__init__()
        convs = [nn.Conv2d(3, channels, 3, padding=1, bias=False)]
        convs += [nn.Conv2d(channels, channels, 3, padding=1, bias=False)
                  for _ in range(max(depth - 1, 0))]
        self.convs = nn.ModuleList(convs)
        self.out = nn.Conv2d(channels, 3, 1, bias=False)
        nn.init.zeros_(self.out.weight)
        self.act = nn.ReLU(inplace=True)

    def forward(self, band):
        h = band
        for conv in self.convs:
            h = self.act(conv(h))
        return band - self.out(h)


class WatermarkDecoder(nn.Module):
    """Reads the payload back out of an image.

    The image is split into its four wavelet subbands, each cleaned by a
    zero-preserving content suppressor. Each bit is then the product of two
    learned linear projections, one on its carrier band and one on its mate
    band, scaled and biased per bit. A zeroed subband zeroes one factor of
    every bit anchored there, collapsing those bits to their bias: the
    payload genuinely needs all four bands.
    """

    def __init__(self, cfg: CodecConfig):
        super().__init__()
        half = cfg.image_size // 2
        coef_dim = 3 * half * half
        self.suppressors = nn.ModuleList(
            BandSuppressor(cfg.channels, cfg.decoder_blocks) for _ in range(4))
        self.carrier_proj = nn.Parameter(
            torch.randn(cfg.message_len, coef_dim) / math.sqrt(coef_dim))
        self.mate_proj = nn.Parameter(
            torch.randn(cfg.message_len, coef_dim) / math.sqrt(coef_dim))
        self.gain = nn.Parameter(torch.ones(cfg.message_len))
        self.bias = nn.Parameter(torch.full((cfg.message_len,), 0.5))
        self.register_buffer("pairs", band_pairs(cfg.message_len))

    def _bands(self, image) -> torch.Tensor:
        """Suppressed flat subbands, shape [B, 4, 3*(H/2)*(W/2)]."""
        sb = haar_decompose(image)
        cleaned = [supp(band) for supp, band in
                   zip(self.suppressors, (sb.ll, sb.lh, sb.hl, sb.hh))]
        return torch.stack(cleaned, dim=1).reshape(image.shape[0], 4, -1)

    def forward(self, image):
        bands = self._bands(image)
        u = (bands[:, self.pairs[:, 0]] * self.carrier_proj).sum(dim=2)
        v = (bands[:, self.pairs[:, 1]] * self.mate_proj).sum(dim=2)
        return self.bias + self.gain * u * v


class Discriminator(nn.Module):
    def __init__(self, cfg: CodecConfig):
        super().__init__()
        c = cfg.channels
        layers = [ConvBNRelu(3, c)]
        layers += [ConvBNRelu(c, c) for _ in range(cfg.discriminator_blocks)]
        layers += [nn.AdaptiveAvgPool2d(1)]
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(c, 1)

    def forward(self, image):
        return self.head(self.features(image).flatten(1))


@dataclass(frozen=True)
class DecodedMessage:
    """Extraction result: hard bits plus the raw decoder outputs."""

    bits: torch.Tensor
    logits: torch.Tensor


class WatermarkCodec:
    """Trained embedder/extractor pair (plus the training-time adversary)."""

    def __init__(self, config: CodecConfig):
        self.config = config
        self.encoder = WatermarkEncoder(config)
        self.decoder = WatermarkDecoder(config)
        self.discriminator = Discriminator(config)

    def eval(self) -> "WatermarkCodec":
        self.encoder.eval()
        self.decoder.eval()
        self.discriminator.eval()
        return self

    def _check_images(self, images: torch.Tensor, exact_size: bool = True):
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValidationError(f"expected [batch, 3, H, W], got {tuple(images.shape)}")
        size = self.config.image_size
        if exact_size and (images.shape[2] != size or images.shape[3] != size):
            raise ValidationError(
                f"image size {tuple(images.shape[2:])} does not match codec size {size}x{size}")

    def embed(self, images: torch.Tensor, bits: torch.Tensor) -> torch.Tensor:
        """Encode ``bits`` into ``images``; output has the same shape, in [0, 1]."""
        self._check_images(images)
        if float(images.min()) < 0.0 or float(images.max()) > 1.0:
            raise ValidationError("image values must lie in [0, 1]")
        if bits.ndim != 2 or bits.shape[0] != images.shape[0]:
            raise ValidationError(f"bits must be [batch, L], got {tuple(bits.shape)}")
        if bits.shape[1] != self.config.message_len:
            raise ConfigurationError(
                f"message length {bits.shape[1]} does not match codec length "
                f"{self.config.message_len}")
        if not bool(((bits == 0) | (bits == 1)).all()):
            raise ValidationError("bits must be 0 or 1")
        self.encoder.eval()
        with torch.no_grad():
            return self.encoder(images.float(), bits.float())

    def extract(self, images: torch.Tensor) -> DecodedMessage:
        """Decode bits; raw outputs above 0.5 become 1, ties and below become 0."""
        self._check_images(images)
        self.decoder.eval()
        with torch.no_grad():
            logits = self.decoder(images.float())
        return DecodedMessage(bits=(logits > 0.5).float(), logits=logits)

    def state(self) -> dict:
        cfg = self.config
        return {
            "image_size": cfg.image_size, "message_len": cfg.message_len,
            "channels": cfg.channels, "encoder_blocks": cfg.encoder_blocks,
            "decoder_blocks": cfg.decoder_blocks,
            "discriminator_blocks": cfg.discriminator_blocks,
            "encoder": self.encoder.state_dict(),
            "decoder": self.decoder.state_dict(),
            "discriminator": self.discriminator.state_dict(),
        }

    @classmethod
    def from_state(cls, state: dict) -> "WatermarkCodec":
        cfg = CodecConfig(
            image_size=int(state["image_size"]), message_len=int(state["message_len"]),
            channels=int(state["channels"]), encoder_blocks=int(state["encoder_blocks"]),
            decoder_blocks=int(state["decoder_blocks"]),
            discriminator_blocks=int(state["discriminator_blocks"]))
        codec = cls(cfg)
        codec.encoder.load_state_dict(state["encoder"])
        codec.decoder.load_state_dict(state["decoder"])
        codec.discriminator.load_state_dict(state["discriminator"])
        return codec.eval()


def bit_accuracy(a: torch.Tensor, b: torch.Tensor) -> float:
    """Fraction of matching bits across the whole batch; BER is 1 minus this."""
    if a.shape != b.shape:
        raise ValidationError(f"message shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    return float((a == b).float().mean())


def ber(a: torch.Tensor, b: torch.Tensor) -> float:
    return 1.0 - bit_accuracy(a, b)


def random_bits(count: int, length: int, generator: torch.Generator | None = None) -> torch.Tensor:
    """Uniform random payloads, shape [count, length], values 0.0/1.0."""
    return torch.randint(0, 2, (count, length), generator=generator).float()
