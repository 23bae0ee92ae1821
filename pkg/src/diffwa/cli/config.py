"""Flat key-value experiment configs with a strict schema.

The format is diffable text: one ``key = value`` per line, ``#`` comments.
Unknown keys and keys that do not apply to the requested stage are rejected
with the full offender list. Resolution fills every stage key with its
default, so the manifest echo is complete and a run can be reproduced from
it alone.
"""

from __future__ import annotations

import hashlib
import importlib.resources
import json
import os
from dataclasses import dataclass

from ..errors import ValidationError

STAGES = ("train-codec", "train-diffusion", "train-estimator", "attack",
          "ablate-frequency", "distort", "sweep-eta", "report")

_DATASET = ("dataset.kind", "dataset.path", "dataset.split", "dataset.count",
            "dataset.image_size", "dataset.seed")
_CODEC_TRAIN = ("codec.message_len", "codec.channels", "codec.encoder_blocks",
                "codec.decoder_blocks", "codec.discriminator_blocks", "codec.epochs",
                "codec.batch_size", "codec.lr", "codec.image_weight", "codec.message_weight",
                "codec.adversarial_weight", "codec.noise_layers")
_DIFFUSION_TRAIN = ("diffusion.model", "diffusion.T", "diffusion.schedule",
                    "diffusion.base_channels", "diffusion.channel_mults", "diffusion.variance",
                    "diffusion.epochs", "diffusion.batch_size", "diffusion.lr")
_ESTIMATOR_TRAIN = ("estimator.depth", "estimator.channels", "estimator.blocks",
                    "estimator.epochs", "estimator.batch_size", "estimator.lr")
_ATTACK = ("attack.sampler", "attack.loops", "attack.depth", "attack.metric", "attack.eta",
           "attack.use_estimator")


@dataclass(frozen=True)
class Key:
    type: type
    default: object
    stages: tuple[str, ...]


def _key(type_, default, stages):
    return Key(type_, default, tuple(stages))


_ALL = STAGES
SCHEMA: dict[str, Key] = {
    "stage": _key(str, None, _ALL),
    "seed": _key(int, 1234, _ALL),
    "out": _key(str, None, _ALL),

    "dataset.kind": _key(str, "synthetic", STAGES[:7]),
    "dataset.path": _key(str, None, STAGES[:7]),
    "dataset.split": _key(str, "train", STAGES[:7]),
    "dataset.count": _key(int, 500, STAGES[:7]),
    "dataset.image_size": _key(int, 32, STAGES[:7]),
    "dataset.seed": _key(int, None, STAGES[:7]),

    "codec.message_len": _key(int, 30, ("train-codec",)),
    "codec.channels": _key(int, 32, ("train-codec",)),
    "codec.encoder_blocks": _key(int, 2, ("train-codec",)),
    "codec.decoder_blocks": _key(int, 3, ("train-codec",)),
    "codec.discriminator_blocks": _key(int, 2, ("train-codec",)),
    "codec.epochs": _key(int, 30, ("train-codec",)),
    "codec.batch_size": _key(int, 32, ("train-codec",)),
    "codec.lr": _key(float, 1e-3, ("train-codec",)),
    "codec.image_weight": _key(float, 0.7, ("train-codec",)),
    "codec.message_weight": _key(float, 1.0, ("train-codec",)),
    "codec.adversarial_weight": _key(float, 0.001, ("train-codec",)),
    "codec.warmup_steps": _key(int, 0, ("train-codec",)),
    "codec.noise_layers": _key(str, "identity", ("train-codec",)),
    "codec.checkpoint": _key(str, None, ("train-diffusion", "train-estimator", "attack",
                                         "ablate-frequency", "distort", "sweep-eta")),

    "diffusion.model": _key(str, "conditional", ("train-diffusion",)),
    "diffusion.T": _key(int, 200, ("train-diffusion",)),
    "diffusion.schedule": _key(str, "linear", ("train-diffusion",)),
    "diffusion.base_channels": _key(int, 32, ("train-diffusion",)),
    "diffusion.channel_mults": _key(str, "1,2", ("train-diffusion",)),
    "diffusion.variance": _key(str, "posterior", ("train-diffusion",)),
    "diffusion.epochs": _key(int, 40, ("train-diffusion",)),
    "diffusion.batch_size": _key(int, 32, ("train-diffusion",)),
    "diffusion.lr": _key(float, 2e-4, ("train-diffusion",)),
    # Conditional pairs per image (distinct payload draws per repeat).
    "diffusion.pair_repeats": _key(int, 1, ("train-diffusion",)),
    "denoiser.checkpoint": _key(str, None, ("train-estimator", "attack", "sweep-eta")),

    "estimator.depth": _key(int, 40, ("train-estimator",)),
    "estimator.channels": _key(int, 32, ("train-estimator",)),
    "estimator.blocks": _key(int, 4, ("train-estimator",)),
    "estimator.epochs": _key(int, 20, ("train-estimator",)),
    "estimator.batch_size": _key(int, 32, ("train-estimator",)),
    "estimator.lr": _key(float, 1e-3, ("train-estimator",)),
    "estimator.pair_repeats": _key(int, 1, ("train-estimator",)),
    "estimator.checkpoint": _key(str, None, ("attack",)),

    "attack.sampler": _key(str, "ddpm", ("attack", "sweep-eta")),
    "attack.loops": _key(int, 2, ("attack", "sweep-eta")),
    "attack.depth": _key(int, 40, ("attack", "sweep-eta")),
    "attack.metric": _key(str, "none", ("attack",)),
    "attack.eta": _key(float, 0.0, ("attack",)),
    "attack.use_estimator": _key(bool, False, ("attack",)),

    "sweep.metric": _key(str, "mse", ("sweep-eta",)),
    "sweep.etas": _key(str, "0,1,5", ("sweep-eta",)),

    "distort.kinds": _key(str, "identity,edge_sharpen,gaussian_blur,uniform_noise,"
                               "gaussian_noise,salt_pepper,jpeg", ("distort",)),

    "report.run": _key(str, None, ("report",)),
}


def _parse_value(key: str, raw: str):
    spec = SCHEMA[key]
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    try:
        if spec.type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return spec.type(raw)
    except ValueError:
        raise ValidationError(f"key {key}: cannot parse {raw!r} as {spec.type.__name__}") from None


def parse_config_text(text: str) -> dict:
    """Parse flat key-value lines; rejects unknown keys with the full list."""
    values: dict[str, object] = {}
    unknown: list[str] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"line {lineno}: expected 'key = value', got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in SCHEMA:
            unknown.append(key)
            continue
        values[key] = _parse_value(key, raw)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return values


def load_config(path: str) -> dict:
    """Read a config file; ``preset:NAME`` loads a packaged preset, and a
    ``manifest.json`` path re-reads the config echoed by a previous run."""
    if path.startswith("preset:"):
        name = path.split(":", 1)[1]
        ref = importlib.resources.files("diffwa") / "presets" / f"{name}.cfg"
        if not ref.is_file():
            raise ValidationError(f"no such preset {name!r}")
        return parse_config_text(ref.read_text())
    if not os.path.exists(path):
        raise ValidationError(f"config file not found: {path}")
    if path.endswith(".json"):
        with open(path) as fh:
            manifest = json.load(fh)
        if "config" not in manifest:
            raise ValidationError(f"{path} is not a run manifest (no 'config' entry)")
        return dict(manifest["config"])
    with open(path) as fh:
        return parse_config_text(fh.read())


def resolve(values: dict, stage: str) -> dict:
    """Fill defaults and enforce stage scoping; returns the full config echo."""
    if stage not in STAGES:
        raise ValidationError(f"unknown stage {stage!r}; expected one of {STAGES}")
    bad = sorted(k for k in values
                 if k not in ("stage",) and k in SCHEMA and stage not in SCHEMA[k].stages
                 and values[k] is not None)
    if bad:
        raise ValidationError(f"keys not valid for stage {stage}: {', '.join(bad)}")
    unknown = sorted(k for k in values if k not in SCHEMA)
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(unknown)}")

    resolved = {"stage": stage}
    for key, spec in SCHEMA.items():
        if key == "stage" or stage not in spec.stages:
            continue
        resolved[key] = values.get(key, spec.default)
    return resolved


def config_hash(resolved: dict) -> str:
    """Experiment-identity hash: covers every key except the output location."""
    canon = "\n".join(f"{k}={resolved[k]}" for k in sorted(resolved) if k != "out")
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def config_text(resolved: dict) -> str:
    """Canonical flat-text rendering of a resolved config."""
    return "\n".join(f"{k} = {resolved[k]}" for k in sorted(resolved)) + "\n"
