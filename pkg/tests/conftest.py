import numpy as np
import pytest

from panlut.lattice import LutTable
from panlut.pipeline import PanLutModel
from panlut.raster import MultiBandImage
from panlut.stages import AoLut, PgLut, SdLut


def random_model(points=3, sd_mode="chained", seed=0, spread=0.6):
    """Identity model plus uniform noise; keeps lookups exercising every stage."""
    rng = np.random.default_rng(seed)
    base = PanLutModel.identity(points, sd_mode)
    tables = [t.entries + rng.uniform(-spread, spread, t.entries.shape) * 0.5 for t in base.tables()]
    return PanLutModel(PgLut(LutTable(tables[0])), SdLut(LutTable(tables[1]), mode=sd_mode), AoLut(LutTable(tables[2])))


def random_pair(size=8, r=2, seed=0, lo=0.1, hi=0.9):
    rng = np.random.default_rng(seed)
    pan = MultiBandImage(rng.uniform(lo, hi, (1, size, size)))
    ms = MultiBandImage(rng.uniform(lo, hi, (4, size // r, size // r)))
    return pan, ms


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict line; the lines are repeated in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
