import pytest
import torch

from diffwa.analysis import distortion_suite, psnr, ssim
from diffwa.analysis.distortions import apply_distortion, salt_pepper
from diffwa.codec import CodecConfig, WatermarkCodec, bit_accuracy, random_bits
from diffwa.errors import ValidationError


@pytest.fixture(scope="module")
def codec_and_batch():
    torch.manual_seed(3)
    codec = WatermarkCodec(CodecConfig(message_len=16, channels=8)).eval()
    gen = torch.Generator()
    gen.manual_seed(0)
    images = torch.rand(6, 3, 32, 32, generator=gen)
    bits = random_bits(6, 16, gen)
    encoded = codec.embed(images, bits)
    return codec, images, bits, encoded


def test_identity_row_matches_direct_metrics(codec_and_batch):
    codec, images, bits, encoded = codec_and_batch
    table = distortion_suite(encoded, images, bits, codec, kinds=("identity",), seed=4)
    row = table["identity"]
    assert row.psnr == psnr(encoded, images)
    assert row.ssim == ssim(encoded, images)
    assert row.bit_accuracy == bit_accuracy(codec.extract(encoded).bits, bits)


def test_full_battery_rows(codec_and_batch):
    codec, images, bits, encoded = codec_and_batch
    table = distortion_suite(encoded, images, bits, codec, seed=4)
    assert set(table) == {"identity", "edge_sharpen", "gaussian_blur", "uniform_noise",
                          "gaussian_noise", "salt_pepper", "jpeg"}
    for kind, row in table.items():
        if kind != "identity":
            assert row.psnr < float("inf")
        assert 0.0 <= row.bit_accuracy <= 1.0
        assert row.ber == pytest.approx(1.0 - row.bit_accuracy)


def test_unknown_kind_rejected(codec_and_batch):
    codec, images, bits, encoded = codec_and_batch
    with pytest.raises(ValidationError):
        apply_distortion("melt", encoded, 1)


def test_salt_pepper_flip_fraction_counting_oracle():
    gen = torch.Generator()
    gen.manual_seed(5)
    x = torch.rand(8, 3, 32, 32, generator=gen) * 0.8 + 0.1  # keep away from {0,1}
    out = salt_pepper(x, 0.1, gen)
    flipped = (out != x).any(dim=1).float().mean()
    n = 8 * 32 * 32
    se = (0.1 * 0.9 / n) ** 0.5
    assert abs(float(flipped) - 0.1) < 4 * se
    changed_pixels = (out != x).any(dim=1)
    extremes = ((out == 0.0) | (out == 1.0)).all(dim=1)
    assert bool((extremes | ~changed_pixels).all())


def test_noise_amplitudes_read_on_8bit_scale():
    x = torch.full((2, 3, 32, 32), 0.5)
    gen = torch.Generator()
    gen.manual_seed(6)
    out = apply_distortion("gaussian_noise", x, 7)
    measured = float((out - x).pow(2).mean()) ** 0.5
    assert measured == pytest.approx(20 / 255, rel=0.15)
    out = apply_distortion("uniform_noise", x, 8)
    delta = out - x
    assert float(delta.min()) >= 0.0
    assert float(delta.max()) <= 50 / 255 + 1e-6
