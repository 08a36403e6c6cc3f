import numpy as np
import pytest

from conftest import random_model, random_pair
from panlut.errors import ShapeError
from panlut.losses import LossConfig
from panlut.pipeline import (
    GradientTape,
    PanLutModel,
    forward,
    forward_backward,
    resolution_ratio,
    sharpen,
    total_loss,
)
from panlut.raster import MultiBandImage, upsample_bicubic
from panlut.stages import aolut_apply, pglut_apply, sdlut_apply


def hand_composed(model, pan, ms):
    up = upsample_bicubic(ms, pan.height // ms.height).data
    pm = np.clip(np.concatenate([pan.data, up]), 0, 1)
    v = np.clip(pglut_apply(model.pglut, pm), 0, 1)
    v = np.clip(sdlut_apply(model.sdlut, v), 0, 1)
    return np.clip(aolut_apply(model.aolut, v), 0, 1)


class TestModel:
    def test_param_total(self):
        assert PanLutModel.identity(9).n_params == 538_002

    def test_mixed_points_rejected(self):
        a, b = PanLutModel.identity(3), PanLutModel.identity(4)
        with pytest.raises(ShapeError):
            PanLutModel(a.pglut, b.sdlut, a.aolut)

    def test_ratio(self):
        pan = MultiBandImage(np.zeros((1, 12, 12)))
        assert resolution_ratio(pan, MultiBandImage(np.zeros((4, 3, 3)))) == 4
        with pytest.raises(ShapeError):
            resolution_ratio(pan, MultiBandImage(np.zeros((4, 5, 5))))
        with pytest.raises(ShapeError):
            resolution_ratio(pan, MultiBandImage(np.zeros((4, 3, 6))))
        with pytest.raises(ShapeError):
            resolution_ratio(pan, MultiBandImage(np.zeros((3, 3, 3))))


class TestSharpen:
    @pytest.mark.parametrize("mode", ["chained", "ensemble"])
    def test_identity_is_clamped_bicubic(self, mode):
        pan, ms = random_pair(64, 4, seed=3, lo=0.0, hi=1.0)
        out = sharpen(PanLutModel.identity(9, mode), pan, ms)
        ref = np.clip(upsample_bicubic(ms, 4).data, 0, 1)
        assert np.max(np.abs(out.data - ref)) < 1e-6

    def test_constant_fields(self):
        model = random_model(5, seed=2)
        pan = MultiBandImage(np.full((1, 8, 8), 0.4))
        ms = MultiBandImage(np.full((4, 2, 2), 0.6))
        out = sharpen(model, pan, ms).data
        assert np.max(np.abs(out - out[:, :1, :1])) < 1e-12

    def test_matches_hand_composition(self):
        model = random_model(5, seed=5)
        pan, ms = random_pair(8, 2, seed=5)
        assert np.array_equal(sharpen(model, pan, ms).data, hand_composed(model, pan, ms))

    def test_output_in_unit_range(self):
        model = random_model(3, seed=7, spread=4.0)
        pan, ms = random_pair(16, 4, seed=7, lo=0.0, hi=1.0)
        out = sharpen(model, pan, ms).data
        assert out.min() >= 0.0 and out.max() <= 1.0

    @pytest.mark.parametrize("mode", ["chained", "ensemble"])
    def test_strips_threads_bit_identical(self, mode):
        model = random_model(5, mode, seed=11)
        pan, ms = random_pair(40, 4, seed=11)
        whole = sharpen(model, pan, ms, strip_rows=None).data
        for rows in (1, 3, 7, 16):
            for threads in (1, 3):
                assert np.array_equal(sharpen(model, pan, ms, threads=threads, strip_rows=rows).data, whole)

    def test_matches_training_forward(self):
        model = random_model(5, seed=13)
        pan, ms = random_pair(12, 4, seed=13)
        assert np.array_equal(sharpen(model, pan, ms, strip_rows=5).data, forward(model, pan, ms).data)


class TestGradients:
    def test_zero_fidelity_at_own_output(self):
        model = random_model(3, seed=1)
        pan, ms = random_pair(6, 2, seed=1)
        gt = forward(model, pan, ms)
        res = forward_backward(model, pan, ms, gt, LossConfig(0, 0))
        assert res.fidelity == 0.0
        assert all(not g.any() for g in res.grads)

    def test_identity_with_bicubic_target(self):
        pan, ms = random_pair(8, 2, seed=2)
        gt = upsample_bicubic(ms, 2)
        res = forward_backward(PanLutModel.identity(5), pan, ms, gt)
        assert res.fidelity < 1e-30

    def test_gt_shape_checked(self):
        pan, ms = random_pair(8, 2)
        with pytest.raises(ShapeError):
            forward_backward(PanLutModel.identity(3), pan, ms, MultiBandImage(np.zeros((4, 4, 4))))

    def test_pin_replays_forward(self):
        model = random_model(3, seed=4, spread=2.0)
        pan, ms = random_pair(6, 2, seed=4, lo=0.0, hi=1.0)
        tape = GradientTape()
        out = forward(model, pan, ms, tape=tape)
        assert np.array_equal(forward(model, pan, ms, pin=tape).data, out.data)

    def test_batch_additivity(self):
        model = random_model(3, seed=6)
        cfg = LossConfig(0, 0)
        a = random_pair(6, 2, seed=6)
        b = random_pair(6, 2, seed=7)
        gt_a = MultiBandImage(np.random.default_rng(6).random((4, 6, 6)))
        gt_b = MultiBandImage(np.random.default_rng(7).random((4, 6, 6)))
        ra = forward_backward(model, *a, gt_a, cfg)
        rb = forward_backward(model, *b, gt_b, cfg)
        # the two-image batch loss is the sum of per-image losses; its gradient is the sum
        fd_idx = np.flatnonzero(ra.grads[2] + rb.grads[2])[:5]
        h = 1e-6
        for i in fd_idx:
            e = model.aolut.table.entries.reshape(-1)
            old = e[i]
            e[i] = old + h
            fp = total_loss(model, *a, gt_a, cfg, pin=ra.tape) + total_loss(model, *b, gt_b, cfg, pin=rb.tape)
            e[i] = old - h
            fm = total_loss(model, *a, gt_a, cfg, pin=ra.tape) + total_loss(model, *b, gt_b, cfg, pin=rb.tape)
            e[i] = old
            assert abs((fp - fm) / (2 * h) - (ra.grads[2].ravel()[i] + rb.grads[2].ravel()[i])) < 1e-7

    def test_loss_matches_components(self):
        model = random_model(3, seed=8)
        pan, ms = random_pair(6, 2, seed=8)
        gt = MultiBandImage(np.random.default_rng(8).random((4, 6, 6)))
        res = forward_backward(model, pan, ms, gt)
        assert abs(res.loss - total_loss(model, pan, ms, gt)) < 1e-12
