"""Full model: PGLUT -> SDLUT -> AOLUT with clamping between stages.

Inference runs in horizontal strips so memory stays bounded for large scenes;
training runs whole-image with a :class:`GradientTape`.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .lattice import LutTable
from .losses import LossConfig, fidelity_grad, loss_fidelity, loss_mono, loss_smooth, mono_grad, smooth_grad
from .raster import MultiBandImage, upsample_bicubic, upsample_bicubic_adjoint
from .stages import (
    AoLut,
    PgLut,
    SdLut,
    StageTape,
    aolut_apply,
    clamp_unit,
    init_identity,
    pglut_apply,
    sdlut_apply,
    stage_backward,
)

__all__ = [
    "PanLutModel",
    "GradientTape",
    "FitResult",
    "resolution_ratio",
    "assemble_input",
    "forward",
    "backward",
    "sharpen",
    "forward_backward",
    "total_loss",
    "STRIP_ROWS",
    "STRIP_HALO",
]

STRIP_ROWS = 256
# chained SDLUT reads one row up/down per pass and moves at most two rows each way
STRIP_HALO = 2
# pixels per lookup batch inside a strip
POINT_CHUNK = 1 << 16


@dataclass
class PanLutModel:
    pglut: PgLut
    sdlut: SdLut
    aolut: AoLut

    def __post_init__(self):
        n = {self.pglut.points, self.sdlut.points, self.aolut.points}
        if len(n) != 1:
            raise ShapeError(f"all three tables must share N, got {sorted(n)}")

    @classmethod
    def identity(cls, points: int = 9, sd_mode: str = "chained") -> "PanLutModel":
        return cls(
            init_identity("pglut", points),
            init_identity("sdlut", points, mode=sd_mode),
            init_identity("aolut", points),
        )

    @property
    def n_points(self) -> int:
        return self.pglut.points

    @property
    def sd_mode(self) -> str:
        return self.sdlut.mode

    @property
    def n_params(self) -> int:
        return self.pglut.n_params + self.sdlut.n_params + self.aolut.n_params

    def tables(self) -> tuple[LutTable, LutTable, LutTable]:
        return self.pglut.table, self.sdlut.table, self.aolut.table

    def copy(self) -> "PanLutModel":
        return PanLutModel(
            PgLut(self.pglut.table.copy()),
            SdLut(self.sdlut.table.copy(), mode=self.sd_mode),
            AoLut(self.aolut.table.copy()),
        )


@dataclass
class GradientTape:
    """Everything the backward pass needs from one forward pass."""

    ratio: int = 1
    ms_shape: tuple = ()
    pm_mask: np.ndarray | None = None
    pg: StageTape = field(default_factory=StageTape)
    pg_mask: np.ndarray | None = None
    sd: StageTape = field(default_factory=StageTape)
    sd_mask: np.ndarray | None = None
    ao: StageTape = field(default_factory=StageTape)
    out_mask: np.ndarray | None = None


def resolution_ratio(pan: MultiBandImage, ms: MultiBandImage) -> int:
    """Integer ratio between PAN and MS grids; raises ShapeError otherwise."""
    if pan.bands != 1:
        raise ShapeError(f"PAN must have 1 band, got {pan.bands}")
    if ms.bands != 4:
        raise ShapeError(f"MS must have 4 bands, got {ms.bands}")
    if pan.height % ms.height or pan.width % ms.width:
        raise ShapeError(
            f"PAN {pan.width}x{pan.height} is not an integer multiple of MS {ms.width}x{ms.height}"
        )
    r = pan.height // ms.height
    if pan.width // ms.width != r:
        raise ShapeError("PAN/MS ratio differs between the two axes")
    return r


def assemble_input(pan: MultiBandImage, ms: MultiBandImage) -> tuple[np.ndarray, int]:
    """Upsample MS to the PAN grid and stack PAN first; returns ``(pm, r)`` unclamped."""
    r = resolution_ratio(pan, ms)
    up = upsample_bicubic(ms, r).data
    return np.concatenate([pan.data, up], axis=0), r


def _pin(pin, name):
    return None if pin is None else getattr(pin, name)


def _forward_pm(model: PanLutModel, pm: np.ndarray, tape: GradientTape | None, pin: GradientTape | None):
    x, m0 = clamp_unit(pm, _pin(pin, "pm_mask"))
    v = pglut_apply(model.pglut, x, _pin(tape, "pg"), _pin(pin, "pg"))
    v, m1 = clamp_unit(v, _pin(pin, "pg_mask"))
    v = sdlut_apply(model.sdlut, v, _pin(tape, "sd"), _pin(pin, "sd"))
    v, m2 = clamp_unit(v, _pin(pin, "sd_mask"))
    out = aolut_apply(model.aolut, v, _pin(tape, "ao"), _pin(pin, "ao"))
    out, m3 = clamp_unit(out, _pin(pin, "out_mask"))
    if tape is not None:
        tape.pm_mask, tape.pg_mask, tape.sd_mask, tape.out_mask = m0, m1, m2, m3
    return out


def forward(
    model: PanLutModel,
    pan: MultiBandImage,
    ms: MultiBandImage,
    tape: GradientTape | None = None,
    pin: GradientTape | None = None,
) -> MultiBandImage:
    """Whole-image forward pass, optionally recording a tape.

    ``pin`` replays the cell assignments and clamp decisions of an earlier
    tape, evaluating the model on that fixed multilinear piece.
    """
    pm, r = assemble_input(pan, ms)
    if tape is not None:
        tape.ratio, tape.ms_shape = r, ms.data.shape
    return pan.with_data(_forward_pm(model, pm, tape, pin))


def backward(model: PanLutModel, tape: GradientTape, dL_dout: np.ndarray):
    """Propagate an output gradient back through a taped forward.

    Returns ``(entry_grads, grad_pm, grad_pan, grad_ms)`` with ``entry_grads``
    a ``(pg, sd, ao)`` tuple of arrays shaped like the table entries.
    """
    g = np.where(tape.out_mask == 0, dL_dout, 0.0)
    ao_g, g = stage_backward(model.aolut, tape.ao, g)
    g = np.where(tape.sd_mask == 0, g, 0.0)
    sd_g, g = stage_backward(model.sdlut, tape.sd, g)
    g = np.where(tape.pg_mask == 0, g, 0.0)
    pg_g, g = stage_backward(model.pglut, tape.pg, g)
    g_pm = np.where(tape.pm_mask == 0, g, 0.0)
    _, h, w = tape.ms_shape
    g_ms = upsample_bicubic_adjoint(g_pm[1:], tape.ratio, h, w)
    return (pg_g, sd_g, ao_g), g_pm, g_pm[:1].copy(), g_ms


def _pointwise_chunked(apply, lut, x: np.ndarray, out_bands: int) -> np.ndarray:
    """Per-pixel stage over fixed-size pixel chunks, clamped; bounds lookup temporaries."""
    bands, h, w = x.shape
    flat = x.reshape(bands, 1, h * w)
    out = np.empty((out_bands, 1, h * w))
    for a in range(0, h * w, POINT_CHUNK):
        b = min(h * w, a + POINT_CHUNK)
        out[:, :, a:b] = np.clip(apply(lut, np.ascontiguousarray(flat[:, :, a:b])), 0.0, 1.0)
    return out.reshape(out_bands, h, w)


def _strip(model: PanLutModel, pan: np.ndarray, up: np.ndarray, a: int, b: int) -> np.ndarray:
    h = pan.shape[1]
    lo, hi = max(0, a - STRIP_HALO), min(h, b + STRIP_HALO)
    pm = np.concatenate([pan[:, lo:hi], up[:, lo:hi]], axis=0)
    np.clip(pm, 0.0, 1.0, out=pm)
    v = _pointwise_chunked(pglut_apply, model.pglut, pm, 5)
    del pm
    # bands are independent in the spatial stage
    for band in range(v.shape[0]):
        v[band : band + 1] = np.clip(sdlut_apply(model.sdlut, v[band : band + 1]), 0.0, 1.0)
    v = np.ascontiguousarray(v[:, a - lo : b - lo])
    return _pointwise_chunked(aolut_apply, model.aolut, v, 4)


def default_threads() -> int:
    env = os.environ.get("PANLUT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sharpen(
    model: PanLutModel,
    pan: MultiBandImage,
    ms: MultiBandImage,
    threads: int | None = 1,
    strip_rows: int | None = STRIP_ROWS,
) -> MultiBandImage:
    """Fuse a PAN band with a 4-band MS image into a 4-band image on the PAN grid.

    The result is independent of ``threads`` and ``strip_rows`` (pass
    ``strip_rows=None`` for single-pass execution): every output pixel is
    computed by the same sequence of elementwise operations either way.
    """
    r = resolution_ratio(pan, ms)
    up = upsample_bicubic(ms, r).data
    h, w = pan.height, pan.width
    rows = h if not strip_rows else strip_rows
    bounds = [(a, min(h, a + rows)) for a in range(0, h, rows)]
    out = np.empty((4, h, w))

    def run(ab):
        a, b = ab
        out[:, a:b] = _strip(model, pan.data, up, a, b)

    threads = default_threads() if threads is None else threads
    if threads <= 1 or len(bounds) == 1:
        for ab in bounds:
            run(ab)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, bounds))
    return MultiBandImage(out, ms.source_vmax, ms.source_dtype)


@dataclass
class FitResult:
    """Loss terms and gradients from one :func:`forward_backward` call."""

    loss: float
    fidelity: float
    smooth: float
    mono: float
    grads: tuple
    grad_pan: np.ndarray
    grad_ms: np.ndarray
    grad_pm: np.ndarray
    pred: MultiBandImage
    tape: GradientTape


def _regularisers(model: PanLutModel):
    tables = model.tables()
    return sum(loss_smooth(t) for t in tables), sum(loss_mono(t) for t in tables)


def total_loss(model, pan, ms, gt, cfg: LossConfig = LossConfig(), pin: GradientTape | None = None) -> float:
    """Objective value; with ``pin`` the forward is restricted to the pinned piece."""
    pred = forward(model, pan, ms, pin=pin)
    smooth, mono = _regularisers(model)
    return loss_fidelity(pred, gt) + cfg.lambda_s * smooth + cfg.lambda_m * mono


def forward_backward(model, pan, ms, gt, cfg: LossConfig = LossConfig()) -> FitResult:
    """Objective and its exact gradient w.r.t. every table entry and input pixel."""
    if gt.data.shape != (4, pan.height, pan.width):
        raise ShapeError(f"ground truth shape {gt.data.shape} != (4, {pan.height}, {pan.width})")
    tape = GradientTape()
    pred = forward(model, pan, ms, tape=tape)
    fid = loss_fidelity(pred, gt)
    smooth, mono = _regularisers(model)
    grads, g_pm, g_pan, g_ms = backward(model, tape, fidelity_grad(pred, gt))
    grads = tuple(
        g + cfg.lambda_s * smooth_grad(t) + cfg.lambda_m * mono_grad(t)
        for g, t in zip(grads, model.tables())
    )
    return FitResult(
        loss=fid + cfg.lambda_s * smooth + cfg.lambda_m * mono,
        fidelity=fid,
        smooth=smooth,
        mono=mono,
        grads=grads,
        grad_pan=g_pan,
        grad_ms=g_ms,
        grad_pm=g_pm,
        pred=pred,
        tape=tape,
    )
