"""Dataset ingestion: the 3073-byte binary image format, image folders, and
a seeded synthetic generator for self-contained runs.

All loaders return float tensors [N, 3, H, W] with values in [0, 1] in a
deterministic order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch
from PIL import Image

from .errors import ParseError, StartupError, ValidationError

DATA_DIR_ENV = "DIFFWA_DATA_DIR"

RECORD_BYTES = 3073  # 1 label byte + 3 * 32 * 32 channel-planar pixels
TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
TEST_FILES = ("test_batch.bin",)

DATASET_KINDS = ("synthetic", "cifar10-binary", "image-folder")


@dataclass(frozen=True)
class DatasetSource:
    kind: str = "synthetic"
    path: str | None = None
    split: str = "train"
    count: int | None = None
    image_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValidationError(f"unknown dataset kind {self.kind!r}; expected {DATASET_KINDS}")
        if self.split not in ("train", "test"):
            raise ValidationError(f"split must be 'train' or 'test', got {self.split!r}")


def resolve_data_path(path: str | None) -> str:
    """Use the path as given, or fall back to the data-dir environment variable."""
    if path:
        if os.path.isabs(path) or os.path.exists(path):
            return path
        root = os.environ.get(DATA_DIR_ENV)
        if root:
            candidate = os.path.join(root, path)
            if os.path.exists(candidate):
                return candidate
        return path
    root = os.environ.get(DATA_DIR_ENV)
    if not root:
        raise StartupError(f"dataset path not set and ${DATA_DIR_ENV} is empty")
    return root


def load_dataset(src: DatasetSource) -> torch.Tensor:
    if src.kind == "synthetic":
        count = src.count if src.count is not None else 500
        return synthetic_images(count, src.image_size, src.seed)
    if src.kind == "cifar10-binary":
        return _load_cifar(src)
    return _load_folder(src)


def parse_cifar_binary(raw: bytes, filename: str = "<bytes>") -> np.ndarray:
    """Decode 3073-byte records into [N, 3, 32, 32] float32 in [0, 1]."""
    if len(raw) % RECORD_BYTES != 0:
        full = len(raw) // RECORD_BYTES
        raise ParseError(
            f"{filename}: length {len(raw)} is not a multiple of {RECORD_BYTES}; "
            f"{full} full records, partial record starts at byte offset {full * RECORD_BYTES}")
    records = np.frombuffer(raw, dtype=np.uint8).reshape(-1, RECORD_BYTES)
    pixels = records[:, 1:].reshape(-1, 3, 32, 32)
    return pixels.astype(np.float32) / 255.0


def write_cifar_binary(path, images: torch.Tensor, labels=None):
    """Inverse of the parser (8-bit quantization applies); used for round-trip checks."""
    arr = (images.clamp(0, 1) * 255.0).round().to(torch.uint8).numpy()
    n = arr.shape[0]
    labels = np.zeros(n, dtype=np.uint8) if labels is None else np.asarray(labels, dtype=np.uint8)
    out = np.empty((n, RECORD_BYTES), dtype=np.uint8)
    out[:, 0] = labels
    out[:, 1:] = arr.reshape(n, -1)
    with open(path, "wb") as fh:
        fh.write(out.tobytes())


def _load_cifar(src: DatasetSource) -> torch.Tensor:
    path = resolve_data_path(src.path)
    if os.path.isfile(path):
        files = [path]
    else:
        names = TRAIN_FILES if src.split == "train" else TEST_FILES
        files = [os.path.join(path, name) for name in names]
        files = [f for f in files if os.path.exists(f)]
        if not files:
            raise StartupError(f"no {src.split} batch files under {path}")
    chunks = []
    remaining = src.count
    for f in files:
        with open(f, "rb") as fh:
            arr = parse_cifar_binary(fh.read(), filename=os.path.basename(f))
        if remaining is not None:
            arr = arr[:remaining]
            remaining -= arr.shape[0]
        chunks.append(torch.from_numpy(arr.copy()))
        if remaining == 0:
            break
    images = torch.cat(chunks, dim=0)
    if src.image_size != 32:
        raise ValidationError("the binary format is fixed at 32x32")
    return images


def _load_folder(src: DatasetSource) -> torch.Tensor:
    path = resolve_data_path(src.path)
    if not os.path.isdir(path):
        raise StartupError(f"image folder not found: {path}")
    names = sorted(n for n in os.listdir(path)
                   if n.lower().endswith((".png", ".jpg", ".jpeg", ".bmp")))
    if src.count is not None:
        names = names[:src.count]
    if not names:
        raise StartupError(f"no images under {path}")
    out = torch.empty(len(names), 3, src.image_size, src.image_size)
    for i, name in enumerate(names):
        with Image.open(os.path.join(path, name)) as img:
            img = img.convert("RGB")
            if img.size != (src.image_size, src.image_size):
                img = img.resize((src.image_size, src.image_size), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.float32) / 255.0
        out[i] = torch.from_numpy(arr).permute(2, 0, 1)
    return out


def synthetic_images(count: int, image_size: int = 32, seed: int = 0) -> torch.Tensor:
    """Procedural images with broadband structure: a color gradient base, a
    few soft blobs, an oriented sinusoid, and speckle texture. Every wavelet
    band carries content. Deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    h = w = image_size
    yy, xx = np.meshgrid(np.linspace(0, 1, h), np.linspace(0, 1, w), indexing="ij")
    out = np.empty((count, 3, h, w), dtype=np.float32)
    for i in range(count):
        theta = rng.uniform(0, 2 * np.pi)
        ramp = (np.cos(theta) * xx + np.sin(theta) * yy + 1.0) / 2.0
        c0, c1 = rng.uniform(0.05, 0.95, 3), rng.uniform(0.05, 0.95, 3)
        img = c0[:, None, None] + (c1 - c0)[:, None, None] * ramp[None]
        for _ in range(rng.integers(1, 4)):
            cy, cx = rng.uniform(0.1, 0.9, 2)
            radius = rng.uniform(0.08, 0.3)
            blob = np.exp(-(((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * radius ** 2)))
            color = rng.uniform(-0.6, 0.6, 3)
            img = img + color[:, None, None] * blob[None]
        fx, fy = rng.uniform(1.0, 6.0, 2)
        phase = rng.uniform(0, 2 * np.pi)
        img = img + 0.05 * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)[None]
        speckle = rng.normal(0.0, 1.0, (h + 2, w + 2))
        speckle = (speckle[:-2, 1:-1] + speckle[2:, 1:-1] + speckle[1:-1, :-2]
                   + speckle[1:-1, 2:] + 2.0 * speckle[1:-1, 1:-1]) / 6.0
        img = img + 0.012 * speckle[None]
        out[i] = np.clip(img, 0.0, 1.0)
    return torch.from_numpy(out)
