"""Shared fixtures: the desk-scale trained stack, cached on disk.

Training the desk artifacts takes ~15 minutes of CPU; the fixture trains
once per cache key and reuses the checkpoints afterwards (delete the cache
directory, or set DIFFWA_TEST_CACHE, to force retraining).
"""

import hashlib
import os

import pytest
import torch

from diffwa.attack import EstimatorTrainConfig, train_estimator
from diffwa.checkpoint import (load_codec, load_denoiser, load_estimator, save_codec,
                               save_denoiser, save_estimator)
from diffwa.codec import CodecConfig, CodecTrainConfig, random_bits, train_codec
from diffwa.data import synthetic_images
from diffwa.diffusion import (DiffusionTrainConfig, make_schedule, train_conditional,
                              train_unconditional)

DESK_T = 200
DESK_DEPTH = 40

CODEC_TRAIN = dict(epochs=30, batch_size=32, lr=1e-3, image_weight=2.0,
                   message_weight=1.0, warmup_steps=60, seed=5)
COND_TRAIN = dict(epochs=55, batch_size=32, lr=3e-4, seed=11)
UNCOND_TRAIN = dict(epochs=30, batch_size=32, lr=3e-4, seed=12)
EST_TRAIN = dict(epochs=25, batch_size=32, lr=1e-3, seed=13)


def _cache_dir() -> str:
    root = os.environ.get(
        "DIFFWA_TEST_CACHE",
        os.path.join(os.path.dirname(__file__), "..", ".cache", "desk-stack"))
    key = hashlib.sha256(repr((CODEC_TRAIN, COND_TRAIN, UNCOND_TRAIN, EST_TRAIN,
                               DESK_T, DESK_DEPTH, "v1")).encode()).hexdigest()[:10]
    path = os.path.join(root, key)
    os.makedirs(path, exist_ok=True)
    return path


class DeskStack:
    """Trained desk artifacts plus the shared evaluation batch."""

    def __init__(self, codec, conditional, unconditional, estimator):
        self.codec = codec
        self.conditional = conditional
        self.unconditional = unconditional
        self.estimator = estimator
        self.schedule = conditional.schedule
        self.train_images = synthetic_images(500, 32, seed=101)
        self.eval_images = synthetic_images(200, 32, seed=202)
        gen = torch.Generator()
        gen.manual_seed(41)
        self.eval_bits = random_bits(200, 30, gen)
        self.eval_encoded = codec.embed(self.eval_images, self.eval_bits)


@pytest.fixture(scope="session")
def desk() -> DeskStack:
    cache = _cache_dir()
    paths = {name: os.path.join(cache, f"{name}.pt")
             for name in ("codec", "cond", "uncond", "estimator")}
    if all(os.path.exists(p) for p in paths.values()):
        return DeskStack(load_codec(paths["codec"]), load_denoiser(paths["cond"]),
                         load_denoiser(paths["uncond"]), load_estimator(paths["estimator"]))

    train = synthetic_images(500, 32, seed=101)
    codec = train_codec(train, CodecTrainConfig(codec=CodecConfig(message_len=30),
                                                **CODEC_TRAIN))
    save_codec(paths["codec"], codec)

    gen = torch.Generator()
    gen.manual_seed(40)
    bits = random_bits(500, 30, gen)
    encoded = codec.embed(train, bits)
    schedule = make_schedule(DESK_T)

    conditional = train_conditional(train, encoded, schedule,
                                    DiffusionTrainConfig(**COND_TRAIN))
    save_denoiser(paths["cond"], conditional)
    unconditional = train_unconditional(train, schedule,
                                        DiffusionTrainConfig(**UNCOND_TRAIN))
    save_denoiser(paths["uncond"], unconditional)
    estimator = train_estimator(train, encoded, DESK_DEPTH, schedule,
                                EstimatorTrainConfig(**EST_TRAIN))
    save_estimator(paths["estimator"], estimator)
    return DeskStack(codec, conditional, unconditional, estimator)
