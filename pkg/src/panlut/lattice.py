"""D-dimensional lattice tables with multilinear interpolation and its gradients.

A table holds ``N`` lattice points per axis over the unit hypercube and an
``E``-vector of outputs at every point. Queries are batched: coordinates have
shape ``(D, ...)`` and every trailing position is an independent lookup.

Corners of a cell are enumerated as a binary counter over the axes with axis 0
the most significant bit, so corner ``c`` uses the upper neighbour on axis
``l`` when bit ``D - 1 - l`` of ``c`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "LutTable",
    "LatticeQuery",
    "locate",
    "interpolate",
    "lookup",
    "neighbour_lookup",
    "backprop_entries",
    "backprop_inputs",
    "corner_bits",
]


@dataclass
class LutTable:
    """Lattice of ``points ** dims`` sample points with ``out_channels`` outputs each.

    ``entries`` has shape ``(N,) * D + (E,)``: axes outermost in declared
    order, output channel innermost.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if e.ndim < 2:
            raise ShapeError("a table needs at least one lattice axis and a channel axis")
        n = e.shape[0]
        if any(s != n for s in e.shape[:-1]):
            raise ShapeError(f"lattice axes must all have the same length, got {e.shape[:-1]}")
        if n < 2:
            raise ShapeError(f"need at least 2 lattice points per axis, got {n}")
        self.entries = e

    @classmethod
    def zeros(cls, dims: int, points: int, out_channels: int) -> "LutTable":
        return cls(np.zeros((points,) * dims + (out_channels,)))

    @property
    def dims(self) -> int:
        return self.entries.ndim - 1

    @property
    def points(self) -> int:
        return self.entries.shape[0]

    @property
    def out_channels(self) -> int:
        return self.entries.shape[-1]

    @property
    def n_params(self) -> int:
        return self.entries.size

    def flat(self) -> np.ndarray:
        """Entries as a ``(N**D, E)`` matrix (a view when possible)."""
        return self.entries.reshape(-1, self.out_channels)

    def copy(self) -> "LutTable":
        return LutTable(self.entries.copy())


def corner_bits(dims: int) -> np.ndarray:
    """``(2**D, D)`` array of 0/1 corner offsets in enumeration order."""
    c = np.arange(2 ** dims)[:, None]
    shifts = np.arange(dims - 1, -1, -1)[None, :]
    return (c >> shifts) & 1


def _strides(dims: int, points: int) -> np.ndarray:
    return points ** np.arange(dims - 1, -1, -1, dtype=np.int64)


@dataclass
class LatticeQuery:
    """Resolved lookups: lower cell corner and fractional offset per axis.

    ``base`` and ``frac`` have shape ``(D, ...)``.
    """

    base: np.ndarray
    frac: np.ndarray
    points: int

    @property
    def dims(self) -> int:
        return self.base.shape[0]

    @property
    def shape(self) -> tuple:
        return self.base.shape[1:]

    @property
    def weights(self) -> np.ndarray:
        """Corner weights, shape ``(2**D, ...)``, in corner enumeration order."""
        w = np.ones((1,) + self.shape)
        for l in range(self.dims):
            f = self.frac[l]
            w = np.stack([w * (1.0 - f), w * f], axis=1).reshape((-1,) + self.shape)
        return w

    def flat_base(self) -> np.ndarray:
        s = _strides(self.dims, self.points)
        idx = self.base[0] * s[0]
        for l in range(1, self.dims):
            idx = idx + self.base[l] * s[l]
        return idx

    def corner_offsets(self) -> np.ndarray:
        return corner_bits(self.dims) @ _strides(self.dims, self.points)


def locate(v, points: int, pin: LatticeQuery | None = None) -> LatticeQuery:
    """Find the lattice cell and offsets for normalised coordinates ``v``.

    ``v`` has shape ``(D, ...)`` with values in ``[0, 1]``. The continuous
    lattice coordinate is ``v * (N - 1)``; the cell index is its floor capped
    at ``N - 2`` so full-scale inputs land on the far face of the last cell.

    When ``pin`` is given its cell indices are reused and only the offsets are
    recomputed (they may then leave ``[0, 1]``). This evaluates the multilinear
    piece of a fixed cell and is used by finite-difference checks.
    """
    v = np.asarray(v, dtype=np.float64)
    x = v * (points - 1)
    if pin is not None:
        return LatticeQuery(pin.base, x - pin.base, points)
    if v.size and (not np.all(v >= 0.0) or not np.all(v <= 1.0)):
        bad = v[~((v >= 0.0) & (v <= 1.0))]
        raise DomainError(f"lattice coordinates must lie in [0, 1]; found {bad.ravel()[0]!r}")
    base = np.minimum(np.floor(x), points - 2).astype(np.int64)
    return LatticeQuery(base, x - base, points)


def _check(table: LutTable, q: LatticeQuery):
    if table.dims != q.dims or table.points != q.points:
        raise ShapeError(
            f"query for D={q.dims}, N={q.points} used with table D={table.dims}, N={table.points}"
        )


@numba.njit(cache=True, nogil=True, inline="always")
def _corners(base_row, frac_row, strides, wts, offs):
    # grow corner weights and offsets axis by axis; the newest axis is the
    # least significant bit, which yields axis 0 as the most significant
    wts[0] = 1.0
    offs[0] = 0
    size = 1
    for l in range(base_row.shape[0]):
        f = frac_row[l]
        step = strides[l]
        start = base_row[l] * step
        for k in range(size - 1, -1, -1):
            w = wts[k]
            o = offs[k] + start
            wts[2 * k + 1] = w * f
            wts[2 * k] = w * (1.0 - f)
            offs[2 * k + 1] = o + step
            offs[2 * k] = o
        size *= 2


@numba.njit(cache=True, nogil=True, inline="always")
def _accumulate(flat, wts, offs, out, p):
    channels = flat.shape[1]
    for e in range(channels):
        acc = 0.0
        for c in range(wts.shape[0]):
            acc += wts[c] * flat[offs[c], e]
        out[e, p] = acc


@numba.njit(cache=True, nogil=True)
def _interp_kernel(flat, base, frac, strides, out):
    dims, n = base.shape
    wts = np.empty(1 << dims)
    offs = np.empty(1 << dims, dtype=np.int64)
    b = np.empty(dims, dtype=np.int64)
    f = np.empty(dims)
    for p in range(n):
        for l in range(dims):
            b[l] = base[l, p]
            f[l] = frac[l, p]
        _corners(b, f, strides, wts, offs)
        _accumulate(flat, wts, offs, out, p)


@numba.njit(cache=True, nogil=True, inline="always")
def _locate_one(v, points, b, f, l):
    # same arithmetic as ``locate``
    if not (v >= 0.0 and v <= 1.0):
        return False
    x = v * (points - 1)
    cell = min(np.floor(x), points - 2.0)
    b[l] = np.int64(cell)
    f[l] = x - np.float64(b[l])
    return True


@numba.njit(cache=True, nogil=True)
def _lookup_kernel(flat, coords, points, strides, out):
    dims, n = coords.shape
    wts = np.empty(1 << dims)
    offs = np.empty(1 << dims, dtype=np.int64)
    b = np.empty(dims, dtype=np.int64)
    f = np.empty(dims)
    for p in range(n):
        for l in range(dims):
            if not _locate_one(coords[l, p], points, b, f, l):
                return p
        _corners(b, f, strides, wts, offs)
        _accumulate(flat, wts, offs, out, p)
    return -1


@numba.njit(cache=True, nogil=True)
def _neighbour_kernel(flat, x, dx, dy, points, strides, out):
    h, w = x.shape
    wts = np.empty(16)
    offs = np.empty(16, dtype=np.int64)
    b = np.empty(4, dtype=np.int64)
    f = np.empty(4)
    for i in range(h):
        for j in range(w):
            for l in range(4):
                yy = min(max(i + dy[l], 0), h - 1)
                xx = min(max(j + dx[l], 0), w - 1)
                if not _locate_one(x[yy, xx], points, b, f, l):
                    return i * w + j
            _corners(b, f, strides, wts, offs)
            acc = 0.0
            for c in range(16):
                acc += wts[c] * flat[offs[c], 0]
            out[i, j] = acc
    return -1


def interpolate(table: LutTable, q: LatticeQuery) -> np.ndarray:
    """Multilinear interpolation; returns an array of shape ``(E, ...)``.

    Each output is the weighted sum of the ``2**D`` surrounding entries, the
    weight of a corner being the product over axes of ``frac`` (upper
    neighbour) or ``1 - frac`` (lower neighbour). Corners are summed in
    enumeration order.
    """
    _check(table, q)
    d = q.dims
    base = np.ascontiguousarray(q.base.reshape(d, -1), dtype=np.int64)
    frac = np.ascontiguousarray(q.frac.reshape(d, -1), dtype=np.float64)
    out = np.empty((table.out_channels, base.shape[1]))
    _interp_kernel(_flat(table), base, frac, _strides(d, q.points), out)
    return out.reshape((table.out_channels,) + q.shape)


def _flat(table: LutTable) -> np.ndarray:
    return np.ascontiguousarray(table.flat())


def lookup(table: LutTable, v) -> np.ndarray:
    """``interpolate(table, locate(v, N))`` in one pass without the query arrays.

    Produces bit-identical results to the two-step form.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[0] != table.dims:
        raise ShapeError(f"{v.shape[0]}-D coordinates for a D={table.dims} table")
    shape = v.shape[1:]
    coords = np.ascontiguousarray(v.reshape(table.dims, -1))
    out = np.empty((table.out_channels, coords.shape[1]))
    bad = _lookup_kernel(_flat(table), coords, table.points, _strides(table.dims, table.points), out)
    if bad >= 0:
        raise DomainError(f"lattice coordinates must lie in [0, 1]; found {coords[:, bad]!r}")
    return out.reshape((table.out_channels,) + shape)


def neighbour_lookup(table: LutTable, x: np.ndarray, offsets) -> np.ndarray:
    """Single-channel D=4 lookup whose coordinates are four neighbours of each pixel.

    ``x`` is one ``(height, width)`` plane, ``offsets`` four ``(dx, dy)``
    pairs; neighbours outside the plane are replicated from the border.
    Bit-identical to gathering the neighbours and calling :func:`lookup`.
    """
    if table.dims != 4 or table.out_channels != 1:
        raise ShapeError("neighbour lookups need a D=4, E=1 table")
    x = np.ascontiguousarray(x, dtype=np.float64)
    dx = np.array([o[0] for o in offsets], dtype=np.int64)
    dy = np.array([o[1] for o in offsets], dtype=np.int64)
    out = np.empty(x.shape)
    bad = _neighbour_kernel(_flat(table), x, dx, dy, table.points, _strides(4, table.points), out)
    if bad >= 0:
        raise DomainError(f"lattice coordinates must lie in [0, 1] near pixel {divmod(bad, x.shape[1])}")
    return out


def backprop_entries(table: LutTable, q: LatticeQuery, dL_dout, grad_accum: np.ndarray) -> None:
    """Accumulate ``weight_c * dL_dout_e`` onto every touched entry, in place.

    ``dL_dout`` has shape ``(E, ...)`` matching the query; ``grad_accum`` has
    the shape of ``table.entries``.
    """
    _check(table, q)
    if grad_accum.shape != table.entries.shape:
        raise ShapeError(f"accumulator shape {grad_accum.shape} != table shape {table.entries.shape}")
    g = np.asarray(dL_dout, dtype=np.float64).reshape(table.out_channels, -1)
    e_count = table.out_channels
    idx = (q.flat_base().ravel()[None, :] + q.corner_offsets()[:, None]) * e_count
    w = q.weights.reshape(idx.shape)
    full_idx = idx[:, :, None] + np.arange(e_count)[None, None, :]
    contrib = w[:, :, None] * g.T[None, :, :]
    acc = grad_accum.reshape(-1)
    acc += np.bincount(full_idx.ravel(), weights=contrib.ravel(), minlength=acc.size)


def _corner_values(table: LutTable, q: LatticeQuery, g: np.ndarray) -> np.ndarray:
    """Per-corner ``sum_e g_e * entry_e``, shape ``(2**D, P)``."""
    flat = table.flat()
    base = q.flat_base().ravel()
    return np.stack([np.einsum("pe,ep->p", flat[base + off], g) for off in q.corner_offsets()])


def backprop_inputs(table: LutTable, q: LatticeQuery, dL_dout) -> np.ndarray:
    """Gradient of ``sum_e dL_dout_e * out_e`` w.r.t. the normalised coordinates.

    Returns shape ``(D, ...)``. On a lattice plane the derivative of the cell
    the query was assigned to is used (lower cell, except at full scale).
    """
    _check(table, q)
    d = q.dims
    g = np.asarray(dL_dout, dtype=np.float64).reshape(table.out_channels, -1)
    s = _corner_values(table, q, g).reshape((2,) * d + (-1,))
    frac = q.frac.reshape(d, -1)
    out = np.empty((d, frac.shape[1]))
    for l in range(d):
        t = s
        # contract axes from the last to the first; axis l takes the difference
        for k in range(d - 1, -1, -1):
            lo, hi = t[(slice(None),) * k + (0,)], t[(slice(None),) * k + (1,)]
            t = hi - lo if k == l else lo * (1.0 - frac[k]) + hi * frac[k]
        out[l] = t
    out *= q.points - 1
    return out.reshape((d,) + q.shape)
