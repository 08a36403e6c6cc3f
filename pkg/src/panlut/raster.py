"""Multi-band raster container and the resampling used around the LUT model.

Images are stored band-sequential as float64 arrays of shape
``(bands, height, width)`` holding samples normalised to ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IngestError, ShapeError

__all__ = [
    "MultiBandImage",
    "normalize_ingest",
    "denormalize",
    "upsample_bicubic",
    "upsample_bicubic_adjoint",
    "gaussian_kernel",
    "gaussian_blur",
    "degrade",
    "wald_degrade",
    "concat_bands",
    "read_padded",
    "catmull_rom",
]


@dataclass
class MultiBandImage:
    """Planar stack of ``bands`` rasters sharing one ``height x width`` grid.

    ``source_vmax`` is the integer full-scale value of the data the image was
    ingested from (1 for data produced directly in the normalised domain) and
    ``source_dtype`` the sample type it was stored with, when known.
    """

    data: np.ndarray
    source_vmax: int = 1
    source_dtype: str | None = field(default=None, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[np.newaxis]
        if data.ndim != 3:
            raise ShapeError(f"expected (bands, height, width) samples, got shape {data.shape}")
        if data.shape[1] < 1 or data.shape[2] < 1:
            raise ShapeError(f"image must be at least 1x1, got {data.shape[2]}x{data.shape[1]}")
        self.data = data

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def samples(self) -> np.ndarray:
        """Flat band-sequential, row-major view of the samples."""
        return self.data.reshape(-1)

    def band_slice(self, start: int, stop: int | None = None) -> "MultiBandImage":
        stop = self.bands if stop is None else stop
        return MultiBandImage(self.data[start:stop].copy(), self.source_vmax, self.source_dtype)

    def with_data(self, data: np.ndarray) -> "MultiBandImage":
        return MultiBandImage(data, self.source_vmax, self.source_dtype)


def normalize_ingest(raw, vmax: int) -> MultiBandImage:
    """Scale integer samples by ``1 / vmax``.

    Raises:
        IngestError: if a sample is negative or exceeds ``vmax``; the message
            names the first offending band and pixel.
    """
    if vmax <= 0:
        raise IngestError(f"vmax must be positive, got {vmax}")
    raw = np.asarray(raw)
    if raw.ndim == 2:
        raw = raw[np.newaxis]
    bad = (raw > vmax) | (raw < 0)
    if bad.any():
        b, y, x = (int(i) for i in np.argwhere(bad)[0])
        raise IngestError(
            f"sample {raw[b, y, x]} at band {b}, pixel (x={x}, y={y}) outside [0, {vmax}]"
        )
    return MultiBandImage(raw.astype(np.float64) / vmax, source_vmax=int(vmax))


def denormalize(img: MultiBandImage, vmax: int | None = None) -> np.ndarray:
    """Inverse of :func:`normalize_ingest`: round ``sample * vmax`` to integers."""
    vmax = img.source_vmax if vmax is None else vmax
    return np.rint(np.clip(img.data, 0.0, 1.0) * vmax).astype(np.int64)


def catmull_rom(t):
    """Catmull-Rom weights for taps at offsets -1, 0, 1, 2 given fraction ``t``."""
    t = np.asarray(t, dtype=np.float64)
    t2 = t * t
    t3 = t2 * t
    return (
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    )


def _cubic_taps(n_in: int, r: int):
    # half-pixel-centre alignment: output i samples source (i + 0.5) / r - 0.5
    src = (np.arange(n_in * r, dtype=np.float64) + 0.5) / r - 0.5
    base = np.floor(src)
    weights = catmull_rom(src - base)
    base = base.astype(np.int64)
    taps = [np.clip(base + k, 0, n_in - 1) for k in (-1, 0, 1, 2)]
    return taps, weights


def _upsample_axis(a: np.ndarray, axis: int, r: int) -> np.ndarray:
    # centre tap plus weighted differences, so constant rows stay exactly constant
    taps, weights = _cubic_taps(a.shape[axis], r)
    shape = [1] * a.ndim
    shape[axis] = -1
    centre = np.take(a, taps[1], axis=axis)
    out = centre.copy()
    for k in (0, 2, 3):
        out += (np.take(a, taps[k], axis=axis) - centre) * weights[k].reshape(shape)
    return out


def _upsample_axis_adjoint(g: np.ndarray, axis: int, r: int, n_in: int) -> np.ndarray:
    taps, weights = _cubic_taps(n_in, r)
    weights = list(weights)
    weights[1] = 1.0 - (weights[0] + weights[2] + weights[3])
    g = np.moveaxis(g, axis, -1)
    lead = g.shape[:-1]
    flat = g.reshape(-1, g.shape[-1])
    out = np.zeros((flat.shape[0], n_in))
    rows = np.arange(flat.shape[0])[:, None] * n_in
    for idx, w in zip(taps, weights):
        contrib = flat * w
        out += np.bincount(
            (rows + idx).ravel(), weights=contrib.ravel(), minlength=out.size
        ).reshape(out.shape)
    return np.moveaxis(out.reshape(lead + (n_in,)), -1, axis)


def upsample_bicubic(ms: MultiBandImage, r: int) -> MultiBandImage:
    """Separable Catmull-Rom upsampling by an integer factor with replicate borders."""
    if r < 1:
        raise ShapeError(f"upsampling ratio must be >= 1, got {r}")
    if r == 1:
        return ms.with_data(ms.data.copy())
    rows = _upsample_axis(ms.data, 1, r)
    return ms.with_data(_upsample_axis(rows, 2, r))


def upsample_bicubic_adjoint(grad: np.ndarray, r: int, height: int, width: int) -> np.ndarray:
    """Transpose of :func:`upsample_bicubic` applied to a gradient image."""
    if r == 1:
        return np.array(grad, dtype=np.float64)
    cols = _upsample_axis_adjoint(np.asarray(grad, dtype=np.float64), 2, r, width)
    return _upsample_axis_adjoint(cols, 1, r, height)


def gaussian_kernel(r: int) -> np.ndarray:
    """Normalised 1-D Gaussian with sigma = r/4, truncated at three sigma."""
    sigma = r / 4.0
    radius = max(1, math.ceil(3.0 * sigma - 1e-12))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _blur_axis(a: np.ndarray, axis: int, kernel: np.ndarray) -> np.ndarray:
    radius = len(kernel) // 2
    n = a.shape[axis]
    out = None
    for k, w in enumerate(kernel):
        idx = np.clip(np.arange(n) + k - radius, 0, n - 1)
        term = np.take(a, idx, axis=axis) * w
        out = term if out is None else out + term
    return out


def gaussian_blur(a: np.ndarray, r: int) -> np.ndarray:
    """Separable blur of a ``(bands, height, width)`` array with :func:`gaussian_kernel`."""
    kernel = gaussian_kernel(r)
    return _blur_axis(_blur_axis(a, 1, kernel), 2, kernel)


def degrade(img: MultiBandImage, r: int) -> MultiBandImage:
    """Gaussian pre-blur followed by ``r x r`` box averaging."""
    if img.height % r or img.width % r:
        raise ShapeError(f"{img.width}x{img.height} image is not divisible by ratio {r}")
    blurred = gaussian_blur(img.data, r)
    c, h, w = blurred.shape
    low = blurred.reshape(c, h // r, r, w // r, r).mean(axis=(2, 4))
    return img.with_data(low)


def wald_degrade(hrms: MultiBandImage, pan: MultiBandImage, r: int = 4):
    """Produce the reduced-resolution ``(ms_low, pan_low)`` pair for a scene."""
    if (hrms.height, hrms.width) != (pan.height, pan.width):
        raise ShapeError("hrms and pan must share spatial dimensions")
    return degrade(hrms, r), degrade(pan, r)


def concat_bands(a: MultiBandImage, b: MultiBandImage) -> MultiBandImage:
    """Stack ``b``'s bands after ``a``'s."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError(
            f"cannot concatenate {a.width}x{a.height} with {b.width}x{b.height}"
        )
    return MultiBandImage(np.concatenate([a.data, b.data], axis=0), a.source_vmax, a.source_dtype)


def read_padded(img: MultiBandImage, band: int, x: int, y: int) -> float:
    """Sample with coordinates clamped into the image (replicate padding)."""
    if not 0 <= band < img.bands:
        raise IndexError(f"band {band} out of range for {img.bands}-band image")
    x = min(max(x, 0), img.width - 1)
    y = min(max(y, 0), img.height - 1)
    return float(img.data[band, y, x])
