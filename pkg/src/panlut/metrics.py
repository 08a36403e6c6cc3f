"""Reference (PSNR, SSIM, SAM, ERGAS) and no-reference (D_lambda, D_s, QNR) quality metrics.

All functions accept :class:`MultiBandImage` or ``(bands, height, width)``
arrays of normalised samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import MetricError, ShapeError
from .raster import MultiBandImage, degrade

__all__ = [
    "PSNR_CAP",
    "EvalReport",
    "psnr",
    "ssim",
    "sam",
    "ergas",
    "q_index",
    "q_blocks",
    "qnr_suite",
    "evaluate_reduced",
    "evaluate_full",
]

PSNR_CAP = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
Q_BLOCK = 32


def _arr(x) -> np.ndarray:
    a = np.asarray(getattr(x, "data", x), dtype=np.float64)
    return a[np.newaxis] if a.ndim == 2 else a


def _pair(pred, gt):
    p, g = _arr(pred), _arr(gt)
    if p.shape != g.shape:
        raise ShapeError(f"shapes differ: {p.shape} vs {g.shape}")
    return p, g


def psnr(pred, gt) -> float:
    """PSNR in dB for unit peak; identical inputs report ``PSNR_CAP``."""
    p, g = _pair(pred, gt)
    mse = float(np.mean((p - g) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _gauss_window():
    x = np.arange(SSIM_WINDOW) - SSIM_WINDOW // 2
    k = np.exp(-(x ** 2) / (2 * SSIM_SIGMA ** 2))
    return k / k.sum()


def _filter_valid(a: np.ndarray, k: np.ndarray) -> np.ndarray:
    n = len(k)
    h, w = a.shape
    rows = sum(k[i] * a[i : h - n + 1 + i] for i in range(n))
    return sum(k[j] * rows[:, j : w - n + 1 + j] for j in range(n))


def ssim(pred, gt) -> float:
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, valid region), averaged over bands."""
    p, g = _pair(pred, gt)
    if min(p.shape[1:]) < SSIM_WINDOW:
        raise MetricError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    k = _gauss_window()
    c1, c2 = SSIM_K1 ** 2, SSIM_K2 ** 2
    vals = []
    for x, y in zip(p, g):
        mx, my = _filter_valid(x, k), _filter_valid(y, k)
        sxx = _filter_valid(x * x, k) - mx * mx
        syy = _filter_valid(y * y, k) - my * my
        sxy = _filter_valid(x * y, k) - mx * my
        smap = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2))
        vals.append(smap.mean())
    return float(np.mean(vals))


def sam(pred, gt) -> float:
    """Mean spectral angle in radians; pixels where either spectrum is zero are skipped."""
    p, g = _pair(pred, gt)
    if p.shape[0] < 2:
        raise MetricError("SAM needs at least two bands")
    np_, ng = np.sqrt(np.sum(p * p, axis=0)), np.sqrt(np.sum(g * g, axis=0))
    valid = (np_ > 0) & (ng > 0)
    if not valid.any():
        raise MetricError("SAM undefined: every pixel has a zero spectrum")
    u = p[:, valid] / np_[valid]
    v = g[:, valid] / ng[valid]
    # 2 atan2(|u - v|, |u + v|) is the angle between unit vectors, exact at 0
    diff = np.sqrt(np.sum((u - v) ** 2, axis=0))
    summ = np.sqrt(np.sum((u + v) ** 2, axis=0))
    return float(np.mean(2.0 * np.arctan2(diff, summ)))


def ergas(pred, gt, r: int = 4) -> float:
    """``100 / r * sqrt(mean_b (RMSE_b / mean(gt_b))**2)``; not symmetric in its arguments."""
    p, g = _pair(pred, gt)
    mu = g.reshape(g.shape[0], -1).mean(axis=1)
    if np.any(mu == 0):
        raise MetricError("ERGAS undefined: a reference band has zero mean")
    rmse = np.sqrt(((p - g) ** 2).reshape(p.shape[0], -1).mean(axis=1))
    return float(100.0 / r * math.sqrt(np.mean((rmse / mu) ** 2)))


def q_index(a, b) -> float:
    """Universal image quality index of two equally sized single-band blocks.

    Two constant blocks (zero variance on both sides) give 1 by convention.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    # exact constancy test: the float variance of a constant block need not be 0
    const_a, const_b = bool(np.all(a == a[0])), bool(np.all(b == b[0]))
    if const_a and const_b:
        return 1.0
    ma, mb = a.mean(), b.mean()
    va = 0.0 if const_a else a.var()
    vb = 0.0 if const_b else b.var()
    cov = 0.0 if const_a or const_b else np.mean((a - ma) * (b - mb))
    den = (va + vb) * (ma * ma + mb * mb)
    if den == 0.0:
        return 0.0
    return float(4.0 * cov * ma * mb / den)


def q_blocks(a, b, block: int = Q_BLOCK) -> float:
    """Mean Q over non-overlapping ``block x block`` tiles (shrunk to fit small images).

    Partial tiles at the right and bottom edges are ignored.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Q blocks need equal shapes, got {a.shape} and {b.shape}")
    h, w = a.shape
    s = min(block, h, w)
    vals = [
        q_index(a[y : y + s, x : x + s], b[y : y + s, x : x + s])
        for y in range(0, h - s + 1, s)
        for x in range(0, w - s + 1, s)
    ]
    return float(np.mean(vals))


def qnr_suite(fused, ms_orig, pan, r: int = 4, block: int = Q_BLOCK):
    """Spectral distortion, spatial distortion and QNR (exponents p = q = 1).

    The PAN image is brought to the MS grid with the same degradation used to
    build reduced-resolution training pairs.
    """
    f, m, p = _arr(fused), _arr(ms_orig), _arr(pan)
    if f.shape[0] != m.shape[0] or f.shape[0] < 2:
        raise ShapeError("fused and MS must have the same number (>= 2) of bands")
    if f.shape[1:] != p.shape[1:] or p.shape[0] != 1:
        raise ShapeError("fused image must be on the single-band PAN grid")
    if (m.shape[1] * r, m.shape[2] * r) != p.shape[1:]:
        raise ShapeError(f"MS grid {m.shape[1:]} times ratio {r} != PAN grid {p.shape[1:]}")
    c = f.shape[0]
    d_lambda = 0.0
    for i in range(c):
        for j in range(c):
            if i != j:
                d_lambda += abs(q_blocks(f[i], f[j], block) - q_blocks(m[i], m[j], block))
    d_lambda /= c * (c - 1)
    pan_low = degrade(MultiBandImage(p), r).data[0]
    d_s = sum(abs(q_blocks(f[i], p[0], block) - q_blocks(m[i], pan_low, block)) for i in range(c)) / c
    return float(d_lambda), float(d_s), float((1.0 - d_lambda) * (1.0 - d_s))


@dataclass
class EvalReport:
    psnr: float | None = None
    ssim: float | None = None
    sam: float | None = None
    ergas: float | None = None
    d_lambda: float | None = None
    d_s: float | None = None
    qnr: float | None = None

    KEYS = ("psnr", "ssim", "sam", "ergas", "d_lambda", "d_s", "qnr")

    def __post_init__(self):
        if None not in (self.d_lambda, self.d_s, self.qnr):
            expected = (1.0 - self.d_lambda) * (1.0 - self.d_s)
            if abs(self.qnr - expected) > 1e-12:
                raise ValueError(f"qnr {self.qnr} != (1 - d_lambda)(1 - d_s) = {expected}")

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k) for k in self.KEYS})

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        data = json.loads(text)
        if set(data) != set(cls.KEYS):
            raise ValueError(f"report keys {sorted(data)} != {sorted(cls.KEYS)}")
        return cls(**data)

    def to_tsv(self) -> str:
        return "\t".join("" if getattr(self, k) is None else repr(getattr(self, k)) for k in self.KEYS)

    def as_dict(self) -> dict:
        return asdict(self)


def evaluate_reduced(pred, gt, r: int = 4) -> EvalReport:
    return EvalReport(psnr=psnr(pred, gt), ssim=ssim(pred, gt), sam=sam(pred, gt), ergas=ergas(pred, gt, r))


def evaluate_full(fused, ms_orig, pan, r: int = 4, block: int = Q_BLOCK) -> EvalReport:
    d_lambda, d_s, qnr = qnr_suite(fused, ms_orig, pan, r, block)
    return EvalReport(d_lambda=d_lambda, d_s=d_s, qnr=qnr)
