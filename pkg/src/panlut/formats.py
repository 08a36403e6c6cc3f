"""Binary file formats: MSR rasters, PGM/PPM previews, PLUT tables and PANLUTM models.

All multi-byte integers and float samples are little-endian except the
16-bit PGM/PPM payload, which is big-endian as the netpbm format requires.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .lattice import LutTable
from .pipeline import PanLutModel
from .raster import MultiBandImage
from .stages import SD_MODES, AoLut, PgLut, SdLut

__all__ = [
    "MSR_DTYPES",
    "encode_msr",
    "decode_msr",
    "read_msr",
    "write_msr",
    "encode_pnm",
    "decode_pnm",
    "read_pnm",
    "write_pnm",
    "encode_plut",
    "decode_plut",
    "encode_model",
    "decode_model",
    "save_model",
    "load_model",
    "PLUT_KINDS",
]

MSR_MAGIC = b"MSR1"
_MSR_HEADER = struct.Struct("<4s5I")
MSR_DTYPES = {"u8": (0, np.dtype("<u1")), "u16": (1, np.dtype("<u2")), "f32": (2, np.dtype("<f4"))}
_MSR_CODES = {code: (name, dt) for name, (code, dt) in MSR_DTYPES.items()}

PLUT_MAGIC = b"PLUT"
_PLUT_HEADER = struct.Struct("<4sHBBHHH")
PLUT_KINDS = ("pglut", "sdlut", "aolut")

MODEL_MAGIC = b"PANLUTM"
_MODEL_HEADER = struct.Struct("<7sBBHI")


def _default_dtype(img: MultiBandImage) -> str:
    if img.source_dtype in MSR_DTYPES:
        return img.source_dtype
    if img.source_vmax <= 1:
        return "f32"
    return "u8" if img.source_vmax <= 255 else "u16"


def encode_msr(img: MultiBandImage, dtype: str | None = None, vmax: int | None = None) -> bytes:
    """Serialise an image; integer payloads hold ``round(sample * vmax)``, float payloads ``sample * vmax``.

    ``vmax`` defaults to the image's source range, or to the integer type's
    maximum when unit-range data is written as ``u8``/``u16``.
    """
    dtype = _default_dtype(img) if dtype is None else dtype
    code, dt = MSR_DTYPES[dtype]
    if vmax is None:
        # unit-range data written as integers uses the full integer range
        vmax = img.source_vmax if dtype == "f32" or img.source_vmax > 1 else int(np.iinfo(dt).max)
    if dtype == "f32":
        payload = (img.data * vmax).astype(dt)
    else:
        limit = np.iinfo(dt).max
        if vmax > limit:
            raise FormatError(f"vmax {vmax} does not fit in {dtype}")
        payload = np.rint(np.clip(img.data, 0.0, 1.0) * vmax).astype(dt)
    header = _MSR_HEADER.pack(MSR_MAGIC, img.width, img.height, img.bands, code, vmax)
    return header + payload.tobytes()


def decode_msr(buf: bytes) -> MultiBandImage:
    if len(buf) < _MSR_HEADER.size:
        raise FormatError("truncated MSR header")
    magic, w, h, c, code, vmax = _MSR_HEADER.unpack_from(buf)
    if magic != MSR_MAGIC:
        raise FormatError(f"bad MSR magic {magic!r}")
    if code not in _MSR_CODES:
        raise FormatError(f"unknown MSR dtype code {code}")
    if vmax == 0:
        raise FormatError("MSR vmax must be positive")
    name, dt = _MSR_CODES[code]
    n = w * h * c
    body = buf[_MSR_HEADER.size :]
    if len(body) != n * dt.itemsize:
        raise FormatError(f"MSR payload has {len(body)} bytes, expected {n * dt.itemsize}")
    raw = np.frombuffer(body, dtype=dt).reshape(c, h, w)
    if name != "f32" and raw.max(initial=0) > vmax:
        raise FormatError(f"MSR sample exceeds declared vmax {vmax}")
    return MultiBandImage(raw.astype(np.float64) / vmax, source_vmax=vmax, source_dtype=name)


def read_msr(path) -> MultiBandImage:
    return decode_msr(Path(path).read_bytes())


def write_msr(path, img: MultiBandImage, dtype: str | None = None, vmax: int | None = None) -> None:
    Path(path).write_bytes(encode_msr(img, dtype, vmax))


def encode_pnm(img: MultiBandImage, bands=None, maxval: int | None = None) -> bytes:
    """PGM for one band, PPM for three; ``bands`` selects which (default: first 1 or 3)."""
    if bands is None:
        bands = [0] if img.bands < 3 else [0, 1, 2]
    if len(bands) not in (1, 3):
        raise FormatError("PNM export needs 1 or 3 bands")
    maxval = 255 if maxval is None else maxval
    data = np.rint(np.clip(img.data[list(bands)], 0.0, 1.0) * maxval)
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    pixels = np.moveaxis(data, 0, -1).astype(dt)
    magic = b"P5" if len(bands) == 1 else b"P6"
    return magic + f"\n{img.width} {img.height}\n{maxval}\n".encode() + pixels.tobytes()


def decode_pnm(buf: bytes) -> MultiBandImage:
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        tokens.append(buf[start:pos])
    pos += 1
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"only binary PGM/PPM supported, got {magic!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    c = 1 if magic == b"P5" else 3
    dt = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * c
    body = buf[pos : pos + n * dt.itemsize]
    if len(body) != n * dt.itemsize:
        raise FormatError("truncated PNM payload")
    raw = np.frombuffer(body, dtype=dt).reshape(h, w, c)
    return MultiBandImage(np.moveaxis(raw, -1, 0).astype(np.float64) / maxval, source_vmax=maxval)


def read_pnm(path) -> MultiBandImage:
    return decode_pnm(Path(path).read_bytes())


def write_pnm(path, img: MultiBandImage, bands=None, maxval: int | None = None) -> None:
    Path(path).write_bytes(encode_pnm(img, bands, maxval))


def encode_plut(table: LutTable, kind: str) -> bytes:
    header = _PLUT_HEADER.pack(
        PLUT_MAGIC, 1, PLUT_KINDS.index(kind), table.dims, table.points, table.out_channels, 0
    )
    return header + table.entries.astype("<f4").tobytes()


def decode_plut(buf: bytes, offset: int = 0):
    """Parse one PLUT block; returns ``(table, kind, next_offset)``."""
    if len(buf) - offset < _PLUT_HEADER.size:
        raise FormatError("truncated PLUT header")
    magic, version, kind, d, n, e, _ = _PLUT_HEADER.unpack_from(buf, offset)
    if magic != PLUT_MAGIC:
        raise FormatError(f"bad PLUT magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported PLUT version {version}")
    if kind >= len(PLUT_KINDS):
        raise FormatError(f"unknown PLUT kind {kind}")
    count = e * n ** d
    start = offset + _PLUT_HEADER.size
    end = start + 4 * count
    if end > len(buf):
        raise FormatError("truncated PLUT entries")
    entries = np.frombuffer(buf[start:end], dtype="<f4").astype(np.float64)
    return LutTable(entries.reshape((n,) * d + (e,))), PLUT_KINDS[kind], end


def encode_model(model: PanLutModel) -> bytes:
    header = _MODEL_HEADER.pack(MODEL_MAGIC, 1, SD_MODES.index(model.sd_mode), model.n_points, 0)
    blocks = [encode_plut(t, k) for t, k in zip(model.tables(), PLUT_KINDS)]
    return header + b"".join(blocks)


def decode_model(buf: bytes) -> PanLutModel:
    if len(buf) < _MODEL_HEADER.size:
        raise FormatError("truncated PANLUTM header")
    magic, version, mode, n, _ = _MODEL_HEADER.unpack_from(buf)
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad PANLUTM magic {magic!r}")
    if version != 1:
        raise FormatError(f"unsupported PANLUTM version {version}")
    if mode >= len(SD_MODES):
        raise FormatError(f"unknown SDLUT mode code {mode}")
    offset = _MODEL_HEADER.size
    tables = []
    for expected in PLUT_KINDS:
        table, kind, offset = decode_plut(buf, offset)
        if kind != expected:
            raise FormatError(f"expected {expected} block, found {kind}")
        if table.points != n:
            raise FormatError(f"{kind} has N={table.points}, header says {n}")
        tables.append(table)
    if offset != len(buf):
        raise FormatError("trailing bytes after PANLUTM blocks")
    return PanLutModel(PgLut(tables[0]), SdLut(tables[1], mode=SD_MODES[mode]), AoLut(tables[2]))


def save_model(path, model: PanLutModel) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> PanLutModel:
    return decode_model(Path(path).read_bytes())
