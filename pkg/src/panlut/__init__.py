"""Pan-sharpening with three chained learnable look-up tables.

A panchromatic band and an upsampled 4-band multispectral image are stacked
and passed through a PAN-guided 5-D spectral table, a 4-D spatial-details
table over rotated 2x2 neighbourhoods and a 5-D output table.
"""

from .errors import DomainError, FormatError, IngestError, MetricError, NumericError, PanLutError, ShapeError
from .lattice import LatticeQuery, LutTable, backprop_entries, backprop_inputs, interpolate, locate
from .losses import LossConfig, loss_fidelity, loss_mono, loss_smooth, loss_total
from .metrics import EvalReport, ergas, evaluate_full, evaluate_reduced, psnr, qnr_suite, sam, ssim
from .pipeline import GradientTape, PanLutModel, forward, forward_backward, sharpen
from .raster import (
    MultiBandImage,
    concat_bands,
    normalize_ingest,
    read_padded,
    upsample_bicubic,
    wald_degrade,
)
from .stages import AoLut, PgLut, SdLut, aolut_forward, init_identity, pglut_forward, sdlut_forward, stage_backward
from .training import OptimState, TrainConfig, adam_step, train

__version__ = "0.1.0"
