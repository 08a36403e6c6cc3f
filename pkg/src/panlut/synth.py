"""Deterministic procedural 4-band scenes standing in for satellite data."""

from __future__ import annotations

import numpy as np

from .raster import MultiBandImage, gaussian_blur

__all__ = ["PAN_WEIGHTS", "PAN_GAMMA", "synth_scene", "pan_from_hrms"]

PAN_WEIGHTS = (0.25, 0.25, 0.25, 0.25)
PAN_GAMMA = 0.9


def pan_from_hrms(hrms: np.ndarray) -> np.ndarray:
    """PAN as a fixed non-negative band combination followed by a mild gamma."""
    lin = sum(w * b for w, b in zip(PAN_WEIGHTS, hrms))
    return np.clip(lin, 0.0, 1.0)[np.newaxis] ** PAN_GAMMA


def synth_scene(size: int = 64, seed: int = 0, height: int | None = None):
    """Return ``(hrms, pan)`` for a ``size x size`` (or ``size x height``) scene.

    The scene is smooth per-band gradients, a set of rectangles with
    band-correlated reflectances and a fine band-correlated texture, all kept
    inside ``[0.05, 0.95]``.
    """
    h, w = (size if height is None else height), size
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy /= max(h - 1, 1)
    xx /= max(w - 1, 1)
    bands = np.empty((4, h, w))
    offset = rng.uniform(0.3, 0.5, 4)
    gx, gy = rng.uniform(-0.15, 0.15, (2, 4))
    for b in range(4):
        bands[b] = offset[b] + gx[b] * (xx - 0.5) + gy[b] * (yy - 0.5)

    n_rect = max(4, (h * w) // 256)
    for _ in range(n_rect):
        rw, rh = rng.integers(2, max(3, w // 4), endpoint=True), rng.integers(2, max(3, h // 4), endpoint=True)
        x0, y0 = rng.integers(0, w - rw + 1), rng.integers(0, h - rh + 1)
        common = rng.uniform(-0.25, 0.25)
        tint = rng.uniform(-0.08, 0.08, 4)
        bands[:, y0 : y0 + rh, x0 : x0 + rw] += (common + tint)[:, None, None]

    noise = rng.standard_normal((1, h, w))
    noise = gaussian_blur(noise, 4)
    noise /= max(noise.std(), 1e-12)
    gains = rng.uniform(0.02, 0.05, 4)
    bands += gains[:, None, None] * noise

    bands = np.clip(bands, 0.05, 0.95)
    hrms = MultiBandImage(bands)
    pan = MultiBandImage(pan_from_hrms(bands))
    return hrms, pan
