"""Training objective: MSE fidelity plus smoothness and monotonicity penalties on the tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .lattice import LutTable

__all__ = [
    "LossConfig",
    "loss_fidelity",
    "fidelity_grad",
    "loss_smooth",
    "smooth_grad",
    "loss_mono",
    "mono_grad",
    "loss_total",
]


@dataclass(frozen=True)
class LossConfig:
    lambda_s: float = 1e-4
    lambda_m: float = 10.0

    def __post_init__(self):
        if self.lambda_s < 0 or self.lambda_m < 0:
            raise ValueError("regulariser weights must be non-negative")


def _arr(x) -> np.ndarray:
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def loss_fidelity(pred, gt) -> float:
    """Mean squared error over all samples."""
    p, g = _arr(pred), _arr(gt)
    if p.shape != g.shape:
        raise ShapeError(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    d = p - g
    return float(np.mean(d * d))


def fidelity_grad(pred, gt) -> np.ndarray:
    p, g = _arr(pred), _arr(gt)
    return 2.0 * (p - g) / p.size


def _entries(table) -> np.ndarray:
    return table.entries if isinstance(table, LutTable) else np.asarray(table, dtype=np.float64)


def _lattice_axes(e: np.ndarray):
    return range(e.ndim - 1)


def loss_smooth(table) -> float:
    """Sum of squared forward differences between neighbours along every lattice axis."""
    e = _entries(table)
    return float(sum(np.sum(np.diff(e, axis=a) ** 2) for a in _lattice_axes(e)))


def smooth_grad(table) -> np.ndarray:
    e = _entries(table)
    g = np.zeros_like(e)
    for a in _lattice_axes(e):
        d = np.diff(e, axis=a)
        n = e.shape[a]
        lo = [slice(None)] * e.ndim
        hi = [slice(None)] * e.ndim
        lo[a], hi[a] = slice(0, n - 1), slice(1, n)
        g[tuple(lo)] -= 2.0 * d
        g[tuple(hi)] += 2.0 * d
    return g


def loss_mono(table) -> float:
    """Sum of ``relu(O[p] - O[p + step])``: penalises every decrease along an axis."""
    e = _entries(table)
    return float(sum(np.sum(np.maximum(-np.diff(e, axis=a), 0.0)) for a in _lattice_axes(e)))


def mono_grad(table) -> np.ndarray:
    e = _entries(table)
    g = np.zeros_like(e)
    for a in _lattice_axes(e):
        active = (np.diff(e, axis=a) < 0).astype(np.float64)
        n = e.shape[a]
        lo = [slice(None)] * e.ndim
        hi = [slice(None)] * e.ndim
        lo[a], hi[a] = slice(0, n - 1), slice(1, n)
        g[tuple(lo)] += active
        g[tuple(hi)] -= active
    return g


def loss_total(pred, gt, model, cfg: LossConfig = LossConfig()) -> float:
    tables = model.tables()
    smooth = sum(loss_smooth(t) for t in tables)
    mono = sum(loss_mono(t) for t in tables)
    return loss_fidelity(pred, gt) + cfg.lambda_s * smooth + cfg.lambda_m * mono
