"""Inference time and peak memory against image size, single-threaded."""

from panlut.bench import format_table, run_bench
from panlut.pipeline import PanLutModel

# %% Time grows linearly with the pixel count; peak memory is bounded by the
# strip size once images are larger than one strip.
rows = run_bench(PanLutModel.identity(), sizes=(256, 512, 1024), repeats=3, threads=1)
print(format_table(rows))
for a, b in zip(rows, rows[1:]):
    print(f"{a.size}^2 -> {b.size}^2: time x{b.median_ms / a.median_ms:.2f} for 4x pixels")
