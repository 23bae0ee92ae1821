"""Stage orchestration: executes one experiment stage into an output directory.

Every run writes ``manifest.json`` (complete config echo + seed — enough to
reproduce the run bitwise), ``metrics.csv`` / ``metrics.json`` (fixed columns
``metric,value,config_hash``), and stage artifacts (checkpoints, arrays,
image grids, curves). Runs are deterministic: identical configs produce
hash-identical metrics files.
"""

from __future__ import annotations

import csv
import json
import math
import os

import numpy as np
import torch

from .. import __version__
from ..analysis.ablation import eta_sweep, frequency_ablation_table
from ..analysis.distortions import DISTORTION_KINDS, distortion_suite
from ..analysis.metrics import format_metric, psnr, ssim
from ..attack import AttackConfig, EstimatorTrainConfig, attack, attack_with_estimator, train_estimator
from ..checkpoint import (load_codec, load_denoiser, load_estimator, save_codec,
                          save_denoiser, save_estimator)
from ..codec.models import CodecConfig, bit_accuracy, random_bits
from ..codec.noise_layers import NoiseLayerSpec
from ..codec.train import CodecTrainConfig, train_codec
from ..data import DatasetSource, load_dataset
from ..diffusion.schedule import make_schedule
from ..diffusion.train import DiffusionTrainConfig, train_conditional, train_unconditional
from ..errors import StartupError, ValidationError
from ..guidance import GuidanceConfig
from ..seeds import SeedStreams
from .config import config_hash, resolve
from .plots import emit_plots, save_image_grid


def run(values: dict) -> str:
    """Execute the stage named in ``values``; returns the output directory."""
    stage = values.get("stage")
    resolved = resolve(values, stage)
    out = resolved.get("out")
    if not out:
        raise ValidationError("config key 'out' (output directory) is required")
    os.makedirs(out, exist_ok=True)

    handler = _STAGES[stage]
    metrics = handler(resolved, out)
    _write_manifest(out, resolved)
    _write_metrics(out, metrics, config_hash(resolved))
    return out


def _dataset(resolved, streams: SeedStreams) -> torch.Tensor:
    seed = resolved["dataset.seed"]
    if seed is None:
        seed = streams.seed("data") % (2 ** 31)
    src = DatasetSource(
        kind=resolved["dataset.kind"], path=resolved["dataset.path"],
        split=resolved["dataset.split"], count=resolved["dataset.count"],
        image_size=resolved["dataset.image_size"], seed=seed)
    return load_dataset(src)


def _require(resolved, key):
    value = resolved.get(key)
    if not value:
        raise StartupError(f"stage {resolved['stage']} needs config key {key!r}")
    return value


def _parse_noise_layers(text: str) -> tuple[NoiseLayerSpec, ...]:
    specs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, param = item.partition(":")
        kwargs = {}
        if param:
            if kind in ("crop", "cropout", "dropout"):
                kwargs["p"] = float(param)
            elif kind == "gaussian_blur":
                kwargs["sigma"] = float(param)
            else:
                kwargs["quality"] = int(float(param))
        specs.append(NoiseLayerSpec(kind, **kwargs))
    if not specs:
        raise ValidationError("codec.noise_layers is empty")
    return tuple(specs)


def _stage_train_codec(resolved, out):
    streams = SeedStreams(resolved["seed"])
    images = _dataset(resolved, streams)
    cfg = CodecTrainConfig(
        codec=CodecConfig(
            image_size=resolved["dataset.image_size"],
            message_len=resolved["codec.message_len"], channels=resolved["codec.channels"],
            encoder_blocks=resolved["codec.encoder_blocks"],
            decoder_blocks=resolved["codec.decoder_blocks"],
            discriminator_blocks=resolved["codec.discriminator_blocks"]),
        epochs=resolved["codec.epochs"], batch_size=resolved["codec.batch_size"],
        lr=resolved["codec.lr"], image_weight=resolved["codec.image_weight"],
        message_weight=resolved["codec.message_weight"],
        adversarial_weight=resolved["codec.adversarial_weight"],
        warmup_steps=resolved["codec.warmup_steps"],
        noise_layers=_parse_noise_layers(resolved["codec.noise_layers"]),
        seed=streams.seed("train"))
    codec = train_codec(images, cfg, log_path=os.path.join(out, "training_log.csv"))
    save_codec(os.path.join(out, "codec.pt"), codec)

    bits = random_bits(images.shape[0], cfg.codec.message_len, streams.generator("messages"))
    encoded = codec.embed(images, bits)
    return {
        "psnr_encoded_original": psnr(encoded, images),
        "ssim_encoded_original": ssim(encoded, images),
        "bit_accuracy_encoded": bit_accuracy(codec.extract(encoded).bits, bits),
        "bit_accuracy_original": bit_accuracy(codec.extract(images).bits, bits),
    }


def _stage_train_diffusion(resolved, out):
    streams = SeedStreams(resolved["seed"])
    images = _dataset(resolved, streams)
    schedule = make_schedule(resolved["diffusion.T"], resolved["diffusion.schedule"])
    mults = tuple(int(m) for m in resolved["diffusion.channel_mults"].split(","))
    cfg = DiffusionTrainConfig(
        epochs=resolved["diffusion.epochs"], batch_size=resolved["diffusion.batch_size"],
        lr=resolved["diffusion.lr"], seed=streams.seed("train"),
        base_channels=resolved["diffusion.base_channels"], channel_mults=mults,
        variance=resolved["diffusion.variance"])

    kind = resolved["diffusion.model"]
    if kind == "conditional":
        codec = load_codec(_require(resolved, "codec.checkpoint"))
        targets, conditions = _paired_dataset(images, codec, streams,
                                              resolved["diffusion.pair_repeats"])
        denoiser = train_conditional(targets, conditions, schedule, cfg)
    elif kind == "unconditional":
        denoiser = train_unconditional(images, schedule, cfg)
    else:
        raise ValidationError(f"diffusion.model must be conditional or unconditional, got {kind!r}")

    save_denoiser(os.path.join(out, "denoiser.pt"), denoiser)
    history = denoiser.train_history
    return {"loss_initial": history[0]["loss"], "loss_final": history[-1]["loss"]}


def _paired_dataset(images, codec, streams: SeedStreams, repeats: int):
    """(target, condition) rows: ``repeats`` embeddings per image, each with a
    fresh payload draw from the messages stream."""
    gen = streams.generator("messages")
    targets, conditions = [], []
    for _ in range(max(1, repeats)):
        bits = random_bits(images.shape[0], codec.config.message_len, gen)
        targets.append(images)
        conditions.append(codec.embed(images, bits))
    return torch.cat(targets), torch.cat(conditions)


def _stage_train_estimator(resolved, out):
    streams = SeedStreams(resolved["seed"])
    images = _dataset(resolved, streams)
    codec = load_codec(_require(resolved, "codec.checkpoint"))
    denoiser = load_denoiser(_require(resolved, "denoiser.checkpoint"))
    images, conditions = _paired_dataset(images, codec, streams,
                                         resolved["estimator.pair_repeats"])
    cfg = EstimatorTrainConfig(
        epochs=resolved["estimator.epochs"], batch_size=resolved["estimator.batch_size"],
        lr=resolved["estimator.lr"], channels=resolved["estimator.channels"],
        blocks=resolved["estimator.blocks"], seed=streams.seed("train"))
    estimator = train_estimator(images, conditions, resolved["estimator.depth"],
                                denoiser.schedule, cfg)
    save_estimator(os.path.join(out, "estimator.pt"), estimator)
    history = estimator.train_history
    return {"loss_initial": history[0]["loss"], "loss_final": history[-1]["loss"]}


def _attack_metrics(originals, encoded, cleaned, bits, codec, loops=None) -> dict:
    metrics = {
        "psnr_encoded_original": psnr(encoded, originals),
        "ssim_encoded_original": ssim(encoded, originals),
        "psnr_clean_original": psnr(cleaned, originals),
        "ssim_clean_original": ssim(cleaned, originals),
        "psnr_clean_encoded": psnr(cleaned, encoded),
        "ssim_clean_encoded": ssim(cleaned, encoded),
        "bit_accuracy_original": bit_accuracy(codec.extract(originals).bits, bits),
        "bit_accuracy_encoded": bit_accuracy(codec.extract(encoded).bits, bits),
        "bit_accuracy_attacked": bit_accuracy(codec.extract(cleaned).bits, bits),
    }
    if loops is not None:
        for i in range(loops.shape[0]):
            snap = torch.as_tensor(loops[i])
            metrics[f"loop{i + 1}.bit_accuracy"] = bit_accuracy(codec.extract(snap).bits, bits)
            metrics[f"loop{i + 1}.psnr_clean_original"] = psnr(snap, originals)
    return metrics


def _stage_attack(resolved, out):
    streams = SeedStreams(resolved["seed"])
    originals = _dataset(resolved, streams)
    codec = load_codec(_require(resolved, "codec.checkpoint"))
    denoiser = load_denoiser(_require(resolved, "denoiser.checkpoint"))
    bits = random_bits(originals.shape[0], codec.config.message_len,
                       streams.generator("messages"))
    encoded = codec.embed(originals, bits)

    guidance = GuidanceConfig(metric=resolved["attack.metric"], eta=resolved["attack.eta"])
    snapshots: list = []
    if resolved["attack.use_estimator"]:
        estimator = load_estimator(_require(resolved, "estimator.checkpoint"))
        cfg = AttackConfig(sampler=resolved["attack.sampler"],
                           conditional=denoiser.conditional, guidance=guidance,
                           loops=resolved["attack.loops"], partial_depth=resolved["attack.depth"],
                           estimator_depth=estimator.depth, seed=streams.seed("attack"))
        cleaned = attack_with_estimator(encoded, estimator, denoiser, cfg)
    else:
        cfg = AttackConfig(sampler=resolved["attack.sampler"],
                           conditional=denoiser.conditional, guidance=guidance,
                           loops=resolved["attack.loops"], partial_depth=resolved["attack.depth"],
                           seed=streams.seed("attack"))
        cleaned = attack(encoded, denoiser, cfg, collect_loops=snapshots)

    arrays = {
        "originals": originals.numpy(), "encoded": encoded.numpy(),
        "cleaned": cleaned.numpy(), "bits": bits.numpy(),
    }
    if snapshots:
        arrays["loops"] = torch.stack(snapshots).numpy()
    np.savez(os.path.join(out, "arrays.npz"), **arrays)
    save_image_grid(os.path.join(out, "grids", "attack.png"), cleaned, originals)
    return _attack_metrics(originals, encoded, cleaned, bits, codec,
                           loops=arrays.get("loops"))


def _stage_ablate(resolved, out):
    streams = SeedStreams(resolved["seed"])
    originals = _dataset(resolved, streams)
    codec = load_codec(_require(resolved, "codec.checkpoint"))
    bits = random_bits(originals.shape[0], codec.config.message_len,
                       streams.generator("messages"))
    encoded = codec.embed(originals, bits)
    table = frequency_ablation_table(encoded, codec, bits)
    metrics = {f"ber_zero_{band}": value for band, value in table.items()}
    metrics["ber_encoded"] = 1.0 - bit_accuracy(codec.extract(encoded).bits, bits)
    return metrics


def _stage_distort(resolved, out):
    streams = SeedStreams(resolved["seed"])
    originals = _dataset(resolved, streams)
    codec = load_codec(_require(resolved, "codec.checkpoint"))
    bits = random_bits(originals.shape[0], codec.config.message_len,
                       streams.generator("messages"))
    encoded = codec.embed(originals, bits)
    kinds = tuple(k.strip() for k in resolved["distort.kinds"].split(",") if k.strip())
    for kind in kinds:
        if kind not in DISTORTION_KINDS:
            raise ValidationError(f"unknown distortion kind {kind!r}")
    table = distortion_suite(encoded, originals, bits, codec, kinds,
                             seed=streams.seed("distort"))
    metrics = {}
    for kind, record in table.items():
        metrics[f"{kind}.psnr"] = record.psnr
        metrics[f"{kind}.ssim"] = record.ssim
        metrics[f"{kind}.bit_accuracy"] = record.bit_accuracy
    return metrics


def _stage_sweep(resolved, out):
    streams = SeedStreams(resolved["seed"])
    originals = _dataset(resolved, streams)
    codec = load_codec(_require(resolved, "codec.checkpoint"))
    denoiser = load_denoiser(_require(resolved, "denoiser.checkpoint"))
    bits = random_bits(originals.shape[0], codec.config.message_len,
                       streams.generator("messages"))
    encoded = codec.embed(originals, bits)

    etas = [float(v) for v in resolved["sweep.etas"].split(",")]
    base = AttackConfig(sampler=resolved["attack.sampler"], conditional=denoiser.conditional,
                        loops=resolved["attack.loops"], partial_depth=resolved["attack.depth"],
                        seed=streams.seed("attack"))
    rows = eta_sweep(encoded, originals, bits, denoiser, codec, base,
                     resolved["sweep.metric"], etas)

    curve_path = os.path.join(out, "curve.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eta", "psnr", "ssim", "bit_accuracy", "ber"])
        for row in rows:
            writer.writerow([format_metric(row[k]) for k in
                             ("eta", "psnr", "ssim", "bit_accuracy", "ber")])
    emit_plots(curve_path, os.path.join(out, "plots"))

    metrics = {}
    for i, row in enumerate(rows):
        for key in ("eta", "psnr", "ssim", "bit_accuracy", "ber"):
            metrics[f"point{i}.{key}"] = row[key]
    return metrics


def _stage_report(resolved, out):
    src = _require(resolved, "report.run")
    manifest_path = os.path.join(src, "manifest.json")
    arrays_path = os.path.join(src, "arrays.npz")
    if not os.path.exists(manifest_path):
        raise StartupError(f"no manifest.json under {src}")
    if not os.path.exists(arrays_path):
        raise StartupError(f"no arrays.npz under {src}; only attack runs can be re-reported")
    with open(manifest_path) as fh:
        src_manifest = json.load(fh)
    arrays = np.load(arrays_path)

    codec = load_codec(_require(src_manifest["config"], "codec.checkpoint"))
    metrics = _attack_metrics(
        torch.from_numpy(arrays["originals"]), torch.from_numpy(arrays["encoded"]),
        torch.from_numpy(arrays["cleaned"]), torch.from_numpy(arrays["bits"]),
        codec, loops=arrays["loops"] if "loops" in arrays else None)
    # Rows must be byte-identical to the source run's: reuse its config hash.
    _write_metrics(out, metrics, src_manifest["config_hash"])
    return None


_STAGES = {
    "train-codec": _stage_train_codec,
    "train-diffusion": _stage_train_diffusion,
    "train-estimator": _stage_train_estimator,
    "attack": _stage_attack,
    "ablate-frequency": _stage_ablate,
    "distort": _stage_distort,
    "sweep-eta": _stage_sweep,
    "report": _stage_report,
}


def _write_manifest(out, resolved):
    manifest = {
        "format_version": 1,
        "package": "diffwa",
        "version": __version__,
        "stage": resolved["stage"],
        "config": resolved,
        "config_hash": config_hash(resolved),
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_metrics(out, metrics: dict | None, hash_str: str):
    if metrics is None:
        return
    rows = [(name, format_metric(value)) for name, value in sorted(metrics.items())]
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "value", "config_hash"])
        for name, value in rows:
            writer.writerow([name, value, hash_str])
    payload = {"config_hash": hash_str,
               "metrics": {name: (value if isinstance(value, str) and not _is_number(value)
                                  else _json_value(value)) for name, value in rows}}
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _json_value(text: str):
    value = float(text)
    if math.isinf(value) or math.isnan(value):
        return text
    return value
