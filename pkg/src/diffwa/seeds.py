"""Named, reproducible random streams derived from one master seed.

Every source of randomness in a run draws from a stream with a stable name
("data", "init", "diffusion", "guidance-reference", ...), so disabling one
consumer (e.g. guidance) never perturbs the draws seen by another.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch


def derive_seed(master: int, name: str) -> int:
    """Stable 63-bit seed for a named stream under ``master``."""
    digest = hashlib.sha256(f"{master}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


class SeedStreams:
    """Factory for per-name torch/numpy generators under one master seed."""

    def __init__(self, master: int):
        self.master = int(master)

    def seed(self, name: str) -> int:
        return derive_seed(self.master, name)

    def generator(self, name: str) -> torch.Generator:
        gen = torch.Generator()
        gen.manual_seed(self.seed(name))
        return gen

    def numpy(self, name: str) -> np.random.Generator:
        return np.random.default_rng(self.seed(name))
