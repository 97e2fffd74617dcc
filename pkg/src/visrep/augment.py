"""Image augmentations applied to frame stacks before encoding.

Both operate on float arrays scaled to [0, 1] with shape (B, 4, 84, 84) and
draw their randomness from a numpy Generator, which keeps them reproducible
across platforms. One shift offset and one intensity factor are drawn per
stack so the four frames of an observation stay aligned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentSpec:
    shift_pad: int = 4
    intensity_scale: float = 0.05
    shift_enabled: bool = True
    intensity_enabled: bool = True


def to_unit(obs):
    """uint8 frames -> float32 in [0, 1]."""
    return np.asarray(obs, dtype=np.float32) / 255.0


def random_shift(obs, pad, rng):
    """Replicate-pad by `pad` pixels and crop back at a random integer offset.

    The offset is drawn uniformly from {0..2*pad}^2, one per stack, shared by
    the stack's frames.
    """
    obs = np.asarray(obs)
    b, c, h, w = obs.shape
    padded = np.pad(obs, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode="edge")
    off = rng.integers(0, 2 * pad + 1, size=(b, 2))
    out = np.empty_like(obs)
    for i in range(b):
        dy, dx = off[i]
        out[i] = padded[i, :, dy:dy + h, dx:dx + w]
    return out


def intensity(obs, scale, rng):
    """Scale every pixel of a stack by (1 + scale * eps), eps ~ N(0,1) clipped
    to [-2, 2], one eps per stack; output clamped back to [0, 1]."""
    obs = np.asarray(obs)
    eps = np.clip(rng.standard_normal(obs.shape[0]), -2.0, 2.0)
    factor = (1.0 + scale * eps).astype(obs.dtype)
    return np.clip(obs * factor[:, None, None, None], 0.0, 1.0)


def augment_stack(obs, spec: AugmentSpec, rng):
    """Full pipeline: to unit floats, then shift, then intensity."""
    out = to_unit(obs) if np.asarray(obs).dtype == np.uint8 else np.asarray(obs, np.float32)
    if spec.shift_enabled:
        out = random_shift(out, spec.shift_pad, rng)
    if spec.intensity_enabled:
        out = intensity(out, spec.intensity_scale, rng)
    return out
