"""The three LUT stages of the model and their backward passes.

* PGLUT maps the 5-vector (pan, r, g, b, nir) of every pixel to 5 outputs.
* SDLUT maps each band's 2x2 quadrant neighbourhood to a new value, using
  four rotated quadrants so that together they cover the 3x3 block around
  a pixel.
* AOLUT maps the 5 intermediate bands of a pixel to the 4 output bands.

Stage functions work on float arrays of shape ``(bands, height, width)``;
the ``*_forward`` wrappers accept and return :class:`MultiBandImage`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .lattice import LatticeQuery, LutTable, backprop_entries, backprop_inputs, interpolate, locate, lookup, neighbour_lookup
from .raster import MultiBandImage

__all__ = [
    "PgLut",
    "SdLut",
    "AoLut",
    "StageTape",
    "ORIENTATIONS",
    "SD_MODES",
    "init_identity",
    "clamp_unit",
    "pglut_apply",
    "sdlut_apply",
    "aolut_apply",
    "pglut_forward",
    "sdlut_forward",
    "aolut_forward",
    "stage_backward",
    "neighbour_index",
]

SD_MODES = ("chained", "ensemble")

# (dx, dy) offsets read by the spatial LUT, one row per orientation. Row k is
# row 0 rotated by k quarter turns with (dx, dy) -> (dy, -dx), so the axis
# order of the lookup rotates with the neighbourhood.
ORIENTATIONS = (
    ((0, 0), (1, 0), (0, 1), (1, 1)),
    ((0, 0), (0, -1), (1, 0), (1, -1)),
    ((0, 0), (-1, 0), (0, -1), (-1, -1)),
    ((0, 0), (0, 1), (-1, 0), (-1, 1)),
)


@dataclass
class _StageLut:
    table: LutTable
    kind = ""
    dims = 0
    out_channels = 0

    def __post_init__(self):
        t = self.table
        if t.dims != self.dims or t.out_channels != self.out_channels:
            raise ShapeError(
                f"{self.kind} needs D={self.dims}, E={self.out_channels}; "
                f"got D={t.dims}, E={t.out_channels}"
            )

    @property
    def points(self) -> int:
        return self.table.points

    @property
    def n_params(self) -> int:
        return self.table.n_params


@dataclass
class PgLut(_StageLut):
    kind = "pglut"
    dims = 5
    out_channels = 5


@dataclass
class SdLut(_StageLut):
    mode: str = "chained"
    kind = "sdlut"
    dims = 4
    out_channels = 1

    def __post_init__(self):
        super().__post_init__()
        if self.mode not in SD_MODES:
            raise ValueError(f"unknown SDLUT mode {self.mode!r}; expected one of {SD_MODES}")


@dataclass
class AoLut(_StageLut):
    kind = "aolut"
    dims = 5
    out_channels = 4


@dataclass
class StageTape:
    """Lookups recorded by one stage forward, for the matching backward.

    ``masks[k]`` is the clamp mask applied to the output of lookup pass ``k``
    inside the stage (only chained SDLUT clamps between its passes); ``None``
    means the pass output left the stage unclamped.
    """

    queries: list = field(default_factory=list)
    orientations: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    shape: tuple = ()


def init_identity(kind: str, points: int = 9, mode: str = "chained"):
    """Table whose interpolation passes its input through unchanged.

    PGLUT returns all five coordinates, SDLUT the current pixel (axis 0) and
    AOLUT coordinates 1..4, i.e. it drops the PAN-derived band.
    """
    if points < 2:
        raise ShapeError(f"need at least 2 lattice points, got {points}")
    grid = np.linspace(0.0, 1.0, points)
    if kind == "pglut":
        coords = np.meshgrid(*([grid] * 5), indexing="ij")
        return PgLut(LutTable(np.stack(coords, axis=-1)))
    if kind == "sdlut":
        entries = np.broadcast_to(grid[:, None, None, None, None], (points,) * 4 + (1,))
        return SdLut(LutTable(entries.copy()), mode=mode)
    if kind == "aolut":
        coords = np.meshgrid(*([grid] * 5), indexing="ij")
        return AoLut(LutTable(np.stack(coords[1:], axis=-1)))
    raise ValueError(f"unknown stage kind {kind!r}")


def clamp_unit(x: np.ndarray, pin: np.ndarray | None = None):
    """Clamp to ``[0, 1]`` and return ``(clamped, mask)``.

    ``mask`` is +1 where the sample was above 1, -1 below 0, 0 otherwise.
    With ``pin`` the given mask is applied instead of a fresh one.
    """
    mask = pin
    if mask is None:
        mask = np.zeros(x.shape, dtype=np.int8)
        mask[x > 1.0] = 1
        mask[x < 0.0] = -1
    y = np.where(mask > 0, 1.0, np.where(mask < 0, 0.0, x))
    return y, mask


def _check_bands(x: np.ndarray, bands: int, what: str):
    if x.ndim != 3 or x.shape[0] != bands:
        raise ShapeError(f"{what} expects {bands} bands, got array of shape {x.shape}")


def _pointwise(table: LutTable, x: np.ndarray, tape, pin):
    if tape is None and pin is None:
        return lookup(table, x)
    q = locate(x, table.points, pin=None if pin is None else pin.queries[0])
    if tape is not None:
        tape.queries.append(q)
        tape.orientations.append(None)
        tape.masks.append(None)
        tape.shape = x.shape[1:]
    return interpolate(table, q)


def pglut_apply(lut: PgLut, x: np.ndarray, tape: StageTape | None = None, pin: StageTape | None = None):
    _check_bands(x, 5, "PGLUT")
    return _pointwise(lut.table, x, tape, pin)


def aolut_apply(lut: AoLut, x: np.ndarray, tape: StageTape | None = None, pin: StageTape | None = None):
    _check_bands(x, 5, "AOLUT")
    return _pointwise(lut.table, x, tape, pin)


def neighbour_index(height: int, width: int, dx: int, dy: int) -> np.ndarray:
    """Flat source index of pixel ``(x + dx, y + dy)`` with replicate borders."""
    yy = np.clip(np.arange(height) + dy, 0, height - 1)
    xx = np.clip(np.arange(width) + dx, 0, width - 1)
    return yy[:, None] * width + xx[None, :]


def _gather(x: np.ndarray, orientation: int) -> np.ndarray:
    h, w = x.shape[1:]
    coords = []
    for dx, dy in ORIENTATIONS[orientation]:
        yy = np.clip(np.arange(h) + dy, 0, h - 1)
        xx = np.clip(np.arange(w) + dx, 0, w - 1)
        coords.append(x[:, yy][:, :, xx])
    return np.stack(coords)


def _sd_pass(table: LutTable, x: np.ndarray, orientation: int, tape, pin, k):
    if tape is None and pin is None:
        return np.stack([neighbour_lookup(table, band, ORIENTATIONS[orientation]) for band in x])
    q = locate(_gather(x, orientation), table.points, pin=None if pin is None else pin.queries[k])
    if tape is not None:
        tape.queries.append(q)
        tape.orientations.append(orientation)
    return interpolate(table, q)[0]


def sdlut_apply(lut: SdLut, x: np.ndarray, tape: StageTape | None = None, pin: StageTape | None = None):
    """Spatial-details lookup over every band independently.

    Chained mode runs the four orientations in sequence, clamping between
    passes; ensemble mode averages the four orientations of the same input.
    """
    if x.ndim != 3:
        raise ShapeError(f"SDLUT expects (bands, height, width), got {x.shape}")
    if tape is not None:
        tape.shape = x.shape[1:]
    if lut.mode == "ensemble":
        acc = None
        for k in range(4):
            y = _sd_pass(lut.table, x, k, tape, pin, k)
            if tape is not None:
                tape.masks.append(None)
            acc = y if acc is None else acc + y
        return acc * 0.25
    for k in range(4):
        y = _sd_pass(lut.table, x, k, tape, pin, k)
        if k < 3:
            if tape is None and pin is None:
                y = np.clip(y, 0.0, 1.0)
            else:
                y, mask = clamp_unit(y, None if pin is None else pin.masks[k])
                if tape is not None:
                    tape.masks.append(mask)
        elif tape is not None:
            tape.masks.append(None)
        x = y
    return x


def _image_forward(fn, lut, img: MultiBandImage, tape):
    return img.with_data(fn(lut, img.data, tape))


def pglut_forward(lut: PgLut, pm: MultiBandImage, tape: StageTape | None = None) -> MultiBandImage:
    return _image_forward(pglut_apply, lut, pm, tape)


def sdlut_forward(lut: SdLut, v: MultiBandImage, tape: StageTape | None = None) -> MultiBandImage:
    return _image_forward(sdlut_apply, lut, v, tape)


def aolut_forward(lut: AoLut, v: MultiBandImage, tape: StageTape | None = None) -> MultiBandImage:
    return _image_forward(aolut_apply, lut, v, tape)


def _scatter_neighbours(dcoords: np.ndarray, orientation: int, shape) -> np.ndarray:
    """Send per-slot coordinate gradients back to the pixels they were read from."""
    h, w = shape
    bands = dcoords.shape[1]
    hw = h * w
    band_off = (np.arange(bands) * hw)[:, None, None]
    idx, wts = [], []
    for slot, (dx, dy) in enumerate(ORIENTATIONS[orientation]):
        idx.append((band_off + neighbour_index(h, w, dx, dy)[None]).ravel())
        wts.append(dcoords[slot].ravel())
    out = np.bincount(np.concatenate(idx), weights=np.concatenate(wts), minlength=bands * hw)
    return out.reshape(bands, h, w)


def stage_backward(lut, tape: StageTape, dL_dout):
    """Chain rule through a recorded stage forward.

    Returns ``(entry_grads, dL_din)`` where ``entry_grads`` has the table's
    entry shape and ``dL_din`` the shape of the stage input.
    """
    table = lut.table
    g = np.asarray(dL_dout, dtype=np.float64)
    grads = np.zeros_like(table.entries)
    if not tape.queries:
        raise ShapeError("empty tape")
    if isinstance(lut, SdLut):
        if g.ndim != 3 or g.shape[1:] != tuple(tape.shape):
            raise ShapeError(f"gradient shape {g.shape} does not match tape {tape.shape}")
        if lut.mode == "ensemble":
            g4 = g * 0.25
            din = np.zeros_like(g)
            for q, k in zip(tape.queries, tape.orientations):
                backprop_entries(table, q, g4[None], grads)
                din += _scatter_neighbours(backprop_inputs(table, q, g4[None]), k, tape.shape)
            return grads, din
        for q, k, mask in reversed(list(zip(tape.queries, tape.orientations, tape.masks))):
            if mask is not None:
                g = np.where(mask == 0, g, 0.0)
            backprop_entries(table, q, g[None], grads)
            g = _scatter_neighbours(backprop_inputs(table, q, g[None]), k, tape.shape)
        return grads, g
    q = tape.queries[0]
    if g.shape != (table.out_channels,) + q.shape:
        raise ShapeError(f"gradient shape {g.shape} does not match stage output {(table.out_channels,) + q.shape}")
    backprop_entries(table, q, g, grads)
    return grads, backprop_inputs(table, q, g)
