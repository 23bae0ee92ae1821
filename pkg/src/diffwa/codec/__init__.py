from .models import (CodecConfig, DecodedMessage, WatermarkCodec, ber, bit_accuracy,
                     random_bits)
from .noise_layers import NOISE_KINDS, NoiseLayerSpec, apply_noise_layer
from .train import CodecTrainConfig, train_codec

__all__ = [
    "CodecConfig", "DecodedMessage", "WatermarkCodec", "ber", "bit_accuracy", "random_bits",
    "NOISE_KINDS", "NoiseLayerSpec", "apply_noise_layer",
    "CodecTrainConfig", "train_codec",
]
