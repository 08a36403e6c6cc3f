"""Throughput and memory scaling of :func:`sharpen` on synthetic inputs."""

from __future__ import annotations

import statistics
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np

from .pipeline import PanLutModel, sharpen
from .raster import MultiBandImage

__all__ = ["BenchRow", "DEFAULT_SIZES", "bench_inputs", "time_sharpen", "peak_memory", "run_bench", "format_table"]

DEFAULT_SIZES = (256, 512, 1024, 2048)
LARGE_SIZE = 9216


@dataclass
class BenchRow:
    size: int
    median_ms: float | None
    peak_mb: float | None
    status: str = "ok"


def bench_inputs(size: int, seed: int = 0, r: int = 4):
    """Uniform random ``(pan, ms)`` pair with a ``size x size`` PAN."""
    rng = np.random.default_rng([seed, size])
    ms = MultiBandImage(rng.random((4, size // r, size // r)))
    pan = MultiBandImage(rng.random((1, size, size)))
    return pan, ms


def time_sharpen(model, pan, ms, repeats: int = 5, threads: int = 1) -> float:
    """Median wall time in milliseconds over ``repeats`` runs after one warm-up."""
    sharpen(model, pan, ms, threads=threads)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        sharpen(model, pan, ms, threads=threads)
        times.append((time.perf_counter() - t0) * 1e3)
    return statistics.median(times)


def peak_memory(model, pan, ms, threads: int = 1) -> float:
    """Peak bytes allocated by one :func:`sharpen` call beyond what already existed."""
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        sharpen(model, pan, ms, threads=threads)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return float(peak - base)


def run_bench(model: PanLutModel | None = None, sizes=DEFAULT_SIZES, seed: int = 0, repeats: int = 5, threads: int = 1):
    model = PanLutModel.identity() if model is None else model
    rows = []
    for size in sizes:
        try:
            pan, ms = bench_inputs(size, seed)
            ms_time = time_sharpen(model, pan, ms, repeats, threads)
            peak = peak_memory(model, pan, ms, threads) / 2 ** 20
            rows.append(BenchRow(size, ms_time, peak))
        except MemoryError:
            rows.append(BenchRow(size, None, None, "OOM"))
    return rows


def format_table(rows) -> str:
    lines = ["size\tpixels\tmedian_ms\tpeak_mb\tstatus"]
    for r in rows:
        t = "" if r.median_ms is None else f"{r.median_ms:.1f}"
        m = "" if r.peak_mb is None else f"{r.peak_mb:.1f}"
        lines.append(f"{r.size}\t{r.size * r.size}\t{t}\t{m}\t{r.status}")
    return "\n".join(lines)
