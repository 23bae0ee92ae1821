"""Fixed positional feature channels shared by the codec and denoiser nets.

Linear ramps plus two sinusoid octaves per axis. Networks that must write or
erase position-locked patterns (the watermark code) receive these alongside
the image; plain convolutions alone are translation-invariant and adapt to
such patterns far too slowly at small training budgets.
"""

from __future__ import annotations

import math

import torch

N_COORD_FEATURES = 10


def coordinate_features(h: int, w: int, dtype=torch.float32) -> torch.Tensor:
    """[N_COORD_FEATURES, h, w] positional channels, normalized to [0, 1] axes."""
    ys = torch.linspace(0.0, 1.0, h, dtype=dtype).view(-1, 1).expand(h, w)
    xs = torch.linspace(0.0, 1.0, w, dtype=dtype).view(1, -1).expand(h, w)
    two_pi = 2.0 * math.pi
    feats = [ys, xs]
    for freq in (1.0, 2.0):
        feats += [torch.sin(two_pi * freq * ys), torch.cos(two_pi * freq * ys),
                  torch.sin(two_pi * freq * xs), torch.cos(two_pi * freq * xs)]
    return torch.stack(feats)
