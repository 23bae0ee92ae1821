"""Versioned checkpoint containers for codecs, denoisers, and estimators.

Each file stores a format version, an artifact kind, a config echo, and the
weights — plain types and tensors only, so loading never unpickles arbitrary
objects. Denoiser files embed the schedule they were trained with; loading
against a different expected schedule is a hard error.
"""

from __future__ import annotations

import os

import torch

from .attack import Estimator
from .codec.models import WatermarkCodec
from .diffusion.model import Denoiser, denoiser_from_state, denoiser_state
from .errors import ConfigurationError, StartupError

FORMAT_VERSION = 1


def _save(path, kind: str, payload: dict):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    torch.save({"format_version": FORMAT_VERSION, "kind": kind, "payload": payload}, path)


def _load(path, kind: str) -> dict:
    if not os.path.exists(path):
        raise StartupError(f"checkpoint not found: {path}")
    blob = torch.load(path, map_location="cpu", weights_only=True)
    if blob.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(
            f"checkpoint {path} has format version {blob.get('format_version')}, "
            f"expected {FORMAT_VERSION}")
    if blob.get("kind") != kind:
        raise ConfigurationError(f"checkpoint {path} holds a {blob.get('kind')!r}, "
                                 f"expected a {kind!r}")
    return blob["payload"]


def save_codec(path, codec: WatermarkCodec):
    _save(path, "codec", codec.state())


def load_codec(path) -> WatermarkCodec:
    return WatermarkCodec.from_state(_load(path, "codec"))


def save_denoiser(path, denoiser: Denoiser):
    _save(path, "denoiser", denoiser_state(denoiser))


def load_denoiser(path, expect_schedule: dict | None = None) -> Denoiser:
    state = _load(path, "denoiser")
    if expect_schedule is not None and state["schedule"] != expect_schedule:
        raise ConfigurationError(
            f"denoiser {path} was trained with schedule {state['schedule']}, "
            f"but {expect_schedule} was requested")
    return denoiser_from_state(state)


def save_estimator(path, estimator: Estimator):
    _save(path, "estimator", estimator.state())


def load_estimator(path) -> Estimator:
    return Estimator.from_state(_load(path, "estimator"))
