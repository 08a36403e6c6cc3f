"""Adam optimisation of the three tables over Wald-protocol training pairs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError
from .lattice import LutTable
from .losses import LossConfig
from .metrics import psnr
from .pipeline import PanLutModel, forward_backward
from .stages import AoLut, PgLut, SdLut

__all__ = ["TrainConfig", "OptimState", "EpochRecord", "adam_step", "train", "format_log_line"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    n_points: int = 9
    epochs: int = 1000
    lr: float = 5e-4
    lambda_s: float = 1e-4
    lambda_m: float = 10.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay_every: int = 200
    decay_factor: float = 0.5
    sd_mode: str = "chained"

    @property
    def loss(self) -> LossConfig:
        return LossConfig(self.lambda_s, self.lambda_m)


@dataclass
class OptimState:
    """Adam moments plus the step-decay learning-rate schedule."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    base_lr: float = 5e-4
    decay_every: int = 200
    decay_factor: float = 0.5
    epoch: int = 0

    @classmethod
    def for_params(cls, params: np.ndarray, **kw) -> "OptimState":
        return cls(np.zeros_like(params), np.zeros_like(params), **kw)

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * self.decay_factor ** (epoch // self.decay_every)

    @property
    def lr(self) -> float:
        return self.lr_at(self.epoch)


def adam_step(params: np.ndarray, grads: np.ndarray, state: OptimState) -> np.ndarray:
    """One bias-corrected Adam update of ``params`` in place; returns ``params``.

    The learning rate comes from ``state.epoch`` through the step schedule.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ShapeError(f"params {params.shape}, grads {grads.shape}, moments {state.m.shape}")
    if not np.all(np.isfinite(grads)):
        bad = int(np.flatnonzero(~np.isfinite(grads))[0])
        raise NumericError(f"non-finite gradient at parameter {bad} (step {state.step + 1})")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    m_hat = state.m / (1.0 - b1 ** state.step)
    v_hat = state.v / (1.0 - b2 ** state.step)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    loss: float
    fidelity: float
    smooth: float
    mono: float
    psnr: float


def format_log_line(rec: EpochRecord) -> str:
    return "\t".join(
        [str(rec.epoch), repr(rec.lr)] + [f"{x:.10g}" for x in (rec.loss, rec.fidelity, rec.smooth, rec.mono, rec.psnr)]
    )


def _bind(model: PanLutModel):
    """Pack the three tables into one flat vector whose slices the tables view."""
    tables = model.tables()
    params = np.concatenate([t.entries.ravel() for t in tables])
    views, start = [], 0
    for t in tables:
        n = t.entries.size
        views.append(params[start : start + n].reshape(t.entries.shape))
        start += n
    bound = PanLutModel(PgLut(LutTable(views[0])), SdLut(LutTable(views[1]), mode=model.sd_mode), AoLut(LutTable(views[2])))
    # LutTable converts with asarray, so the views stay shared with ``params``
    assert all(np.shares_memory(b.entries, params) for b in bound.tables())
    return params, bound


def train(pairs, cfg: TrainConfig = TrainConfig(), model: PanLutModel | None = None, on_epoch=None):
    """Fit a model to ``(pan, ms, gt)`` pairs, one Adam step per pair.

    Starts from the identity model unless ``model`` is given. Pairs are
    visited in the given order every epoch. ``on_epoch`` is called with each
    :class:`EpochRecord`. Returns ``(model, history)``; the returned tables are
    rounded to float32, the precision they are stored with on disk.
    """
    if not pairs:
        raise ValueError("need at least one training pair")
    model = PanLutModel.identity(cfg.n_points, cfg.sd_mode) if model is None else model.copy()
    params, model = _bind(model)
    state = OptimState.for_params(
        params,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
        base_lr=cfg.lr,
        decay_every=cfg.decay_every,
        decay_factor=cfg.decay_factor,
    )
    history = []
    loss_cfg = cfg.loss
    for epoch in range(cfg.epochs):
        state.epoch = epoch
        terms = np.zeros(5)
        for pan, ms, gt in pairs:
            res = forward_backward(model, pan, ms, gt, loss_cfg)
            terms += (res.loss, res.fidelity, res.smooth, res.mono, psnr(res.pred, gt))
            adam_step(params, np.concatenate([g.ravel() for g in res.grads]), state)
        terms /= len(pairs)
        rec = EpochRecord(epoch, state.lr, *(float(t) for t in terms))
        history.append(rec)
        if on_epoch is not None:
            on_epoch(rec)
        log.debug(format_log_line(rec))
    params[:] = params.astype(np.float32)
    return model.copy(), history
