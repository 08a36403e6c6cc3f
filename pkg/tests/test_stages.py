import numpy as np
import pytest

from panlut.errors import ShapeError
from panlut.lattice import LutTable, interpolate, locate, neighbour_lookup
from panlut.raster import MultiBandImage, read_padded
from panlut.stages import (
    ORIENTATIONS,
    AoLut,
    PgLut,
    SdLut,
    StageTape,
    aolut_apply,
    aolut_forward,
    init_identity,
    pglut_apply,
    pglut_forward,
    sdlut_apply,
    sdlut_forward,
    stage_backward,
)


def rand_lut(cls, points, rng, **kw):
    return cls(LutTable(rng.random((points,) * cls.dims + (cls.out_channels,))), **kw)


def sd_oracle(table, x, mode):
    """Per-pixel SDLUT using read_padded neighbour reads and scalar lookups."""
    def one_pass(img, k):
        out = np.empty(img.data.shape)
        for b in range(img.bands):
            for y in range(img.height):
                for xx in range(img.width):
                    v = [read_padded(img, b, xx + dx, y + dy) for dx, dy in ORIENTATIONS[k]]
                    out[b, y, xx] = interpolate(table, locate(np.array(v), table.points))[0]
        return out

    img = MultiBandImage(x)
    if mode == "ensemble":
        return sum(one_pass(img, k) for k in range(4)) * 0.25
    for k in range(4):
        y = one_pass(img, k)
        img = MultiBandImage(np.clip(y, 0, 1) if k < 3 else y)
    return img.data


class TestIdentity:
    def test_entries(self):
        pg = init_identity("pglut", 9)
        assert np.array_equal(pg.table.entries[8, 0, 0, 0, 0], [1, 0, 0, 0, 0])
        assert init_identity("sdlut", 9).table.entries[4, 7, 2, 1, 0] == 0.5
        ao = init_identity("aolut", 9)
        assert np.array_equal(ao.table.entries[3, 8, 0, 4, 2], [1.0, 0.0, 0.5, 0.25])

    def test_counts(self):
        for n in (3, 6, 9):
            assert init_identity("pglut", n).n_params == 5 * n ** 5
            assert init_identity("sdlut", n).n_params == n ** 4
            assert init_identity("aolut", n).n_params == 4 * n ** 5

    def test_forwards_pass_through(self, rng):
        x = MultiBandImage(rng.random((5, 7, 6)))
        assert np.max(np.abs(pglut_forward(init_identity("pglut"), x).data - x.data)) < 1e-6
        for mode in ("chained", "ensemble"):
            out = sdlut_forward(init_identity("sdlut", mode=mode), x).data
            assert np.max(np.abs(out - x.data)) < 1e-6
        assert np.max(np.abs(aolut_forward(init_identity("aolut"), x).data - x.data[1:])) < 1e-6

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            init_identity("xlut")


class TestValidation:
    def test_wrong_table_shape(self):
        with pytest.raises(ShapeError):
            PgLut(LutTable.zeros(4, 3, 5))
        with pytest.raises(ShapeError):
            AoLut(LutTable.zeros(5, 3, 5))

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            SdLut(LutTable.zeros(4, 3, 1), mode="parallel")

    def test_band_count(self, rng):
        with pytest.raises(ShapeError):
            pglut_apply(init_identity("pglut", 3), rng.random((4, 2, 2)))
        with pytest.raises(ShapeError):
            aolut_apply(init_identity("aolut", 3), rng.random((6, 2, 2)))


class TestPointwise:
    def test_pan_disambiguates(self, rng):
        lut = rand_lut(PgLut, 5, rng)
        x = np.array([0.2, 0.4, 0.6, 0.3, 0.7])[:, None, None].repeat(2, axis=2)
        x[0, 0, 1] = 0.85
        out = pglut_apply(lut, x)
        assert not np.allclose(out[:, 0, 0], out[:, 0, 1])

    @pytest.mark.parametrize("cls,fn", [(PgLut, pglut_apply), (AoLut, aolut_apply)])
    def test_per_pixel_oracle(self, rng, cls, fn):
        lut = rand_lut(cls, 5, rng)
        x = rng.random((5, 4, 3))
        out = fn(lut, x)
        for y in range(4):
            for xx in range(3):
                ref = interpolate(lut.table, locate(x[:, y, xx], 5))
                assert np.max(np.abs(out[:, y, xx] - ref)) < 1e-15

    def test_constant_input(self, rng):
        lut = rand_lut(AoLut, 5, rng)
        out = aolut_apply(lut, np.full((5, 3, 3), 0.5))
        assert np.array_equal(out, np.broadcast_to(lut.table.entries[2, 2, 2, 2, 2][:, None, None], out.shape))

    def test_spatial_equivariance(self, rng):
        lut = rand_lut(PgLut, 4, rng)
        x = rng.random((5, 1, 20))
        perm = rng.permutation(20)
        assert np.array_equal(pglut_apply(lut, x[:, :, perm]), pglut_apply(lut, x)[:, :, perm])

    def test_piecewise_multilinear(self, rng):
        lut = rand_lut(PgLut, 5, rng)
        # three collinear points along axis 2 inside cell [0.25, 0.5]
        x = np.tile(rng.uniform(0.26, 0.49, 5)[:, None, None], (1, 1, 3))
        x[2, 0] = [0.3, 0.35, 0.4]
        out = pglut_apply(lut, x)[:, 0]
        assert np.max(np.abs(out[:, 1] - 0.5 * (out[:, 0] + out[:, 2]))) < 1e-10


class TestSpatial:
    @pytest.mark.parametrize("mode", ["chained", "ensemble"])
    def test_matches_per_pixel_oracle(self, rng, mode):
        lut = rand_lut(SdLut, 4, rng, mode=mode)
        x = rng.random((2, 5, 6))
        assert np.max(np.abs(sdlut_apply(lut, x) - sd_oracle(lut.table, x, mode))) < 1e-15

    def test_orientations_are_quarter_turns(self):
        base = ORIENTATIONS[0]
        for k in range(1, 4):
            assert ORIENTATIONS[k] == tuple((dy, -dx) for dx, dy in ORIENTATIONS[k - 1])
        union = {p for o in ORIENTATIONS for p in o}
        assert union == {(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1)}
        assert set(base) == {(0, 0), (1, 0), (0, 1), (1, 1)}

    def test_receptive_field(self, rng):
        lut = rand_lut(SdLut, 5, rng, mode="ensemble")
        x = rng.random((1, 9, 9))
        ref = sdlut_apply(lut, x)[0, 4, 4]
        for y in range(9):
            for xx in range(9):
                p = x.copy()
                p[0, y, xx] = 1.0 - p[0, y, xx]
                got = sdlut_apply(lut, p)[0, 4, 4]
                if max(abs(y - 4), abs(xx - 4)) >= 2:
                    assert got == ref
                else:
                    assert got != ref

    def test_ensemble_rotation_invariance(self, rng):
        lut = rand_lut(SdLut, 5, rng, mode="ensemble")
        x = rng.random((2, 7, 7))
        for k in range(1, 4):
            rotated = np.rot90(x, k, axes=(1, 2))
            lhs = sdlut_apply(lut, np.ascontiguousarray(rotated))
            rhs = np.rot90(sdlut_apply(lut, x), k, axes=(1, 2))
            assert np.max(np.abs(lhs - rhs)) < 1e-12


def fd_stage(fn, lut, x, g, tape, h=1e-4):
    """Central differences of sum(g * stage(x)) w.r.t. every input sample, on the taped piece."""
    out = np.empty(x.size)
    flat = x.ravel()
    for i in range(x.size):
        xp, xm = flat.copy(), flat.copy()
        xp[i] += h
        xm[i] -= h
        fp = np.sum(g * fn(lut, xp.reshape(x.shape), pin=tape))
        fm = np.sum(g * fn(lut, xm.reshape(x.shape), pin=tape))
        out[i] = (fp - fm) / (2 * h)
    return out.reshape(x.shape)


def fd_entries(fn, lut, x, g, tape, idx, h=1e-4):
    res = []
    for i in idx:
        e = lut.table.entries.reshape(-1)
        old = e[i]
        e[i] = old + h
        fp = np.sum(g * fn(lut, x, pin=tape))
        e[i] = old - h
        fm = np.sum(g * fn(lut, x, pin=tape))
        e[i] = old
        res.append((fp - fm) / (2 * h))
    return np.array(res)


def rel_err(a, b, floor=1e-6):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


class TestBackward:
    def test_zero_upstream(self, rng):
        lut = rand_lut(SdLut, 3, rng)
        tape = StageTape()
        x = rng.random((5, 4, 4))
        sdlut_apply(lut, x, tape)
        grads, din = stage_backward(lut, tape, np.zeros_like(x))
        assert not grads.any() and not din.any()

    def test_single_pixel_weights(self, rng):
        lut = rand_lut(AoLut, 3, rng)
        tape = StageTape()
        x = rng.random((5, 1, 1))
        aolut_apply(lut, x, tape)
        g = rng.standard_normal((4, 1, 1))
        grads, _ = stage_backward(lut, tape, g)
        q = tape.queries[0]
        w = q.weights[:, 0, 0]
        base = q.base[:, 0, 0]
        for c, bits in enumerate(np.array([[(c >> (4 - l)) & 1 for l in range(5)] for c in range(32)])):
            assert np.allclose(grads[tuple(base + bits)], w[c] * g[:, 0, 0], atol=1e-15)

    @pytest.mark.parametrize("mode", ["chained", "ensemble"])
    def test_sdlut_finite_differences(self, rng, mode):
        lut = rand_lut(SdLut, 4, rng, mode=mode)
        # shrink the table toward the middle so most passes stay unclamped
        lut.table.entries[:] = 0.2 + 0.6 * lut.table.entries
        x = rng.uniform(0.05, 0.95, (2, 6, 6))
        tape = StageTape()
        sdlut_apply(lut, x, tape)
        g = rng.standard_normal(x.shape)
        grads, din = stage_backward(lut, tape, g)
        assert rel_err(din, fd_stage(sdlut_apply, lut, x, g, tape)) < 1e-3
        idx = np.flatnonzero(grads)[:60]
        assert rel_err(grads.ravel()[idx], fd_entries(sdlut_apply, lut, x, g, tape, idx)) < 1e-3

    @pytest.mark.parametrize("cls,fn", [(PgLut, pglut_apply), (AoLut, aolut_apply)])
    def test_pointwise_finite_differences(self, rng, cls, fn):
        lut = rand_lut(cls, 3, rng)
        x = rng.uniform(0.05, 0.95, (5, 3, 3))
        tape = StageTape()
        fn(lut, x, tape)
        g = rng.standard_normal((cls.out_channels, 3, 3))
        grads, din = stage_backward(lut, tape, g)
        assert rel_err(din, fd_stage(fn, lut, x, g, tape)) < 1e-3
        idx = np.flatnonzero(grads)[:60]
        assert rel_err(grads.ravel()[idx], fd_entries(fn, lut, x, g, tape, idx)) < 1e-3

    def test_shape_mismatch(self, rng):
        lut = rand_lut(SdLut, 3, rng)
        tape = StageTape()
        sdlut_apply(lut, rng.random((5, 4, 4)), tape)
        with pytest.raises(ShapeError):
            stage_backward(lut, tape, np.zeros((5, 4, 3)))


@pytest.mark.parametrize("orientation", range(4))
def test_neighbour_lookup_bitwise_matches_gathered_lookup(orientation):
    rng = np.random.default_rng(orientation)
    table = LutTable(rng.random((6,) * 4 + (1,)))
    x = rng.random((1, 5, 7))
    offsets = ORIENTATIONS[orientation]
    rows, cols = np.arange(5), np.arange(7)
    gathered = np.stack(
        [x[0][np.clip(rows + dy, 0, 4)][:, np.clip(cols + dx, 0, 6)] for dx, dy in offsets]
    )
    expected = interpolate(table, locate(gathered, 6))[0]
    np.testing.assert_array_equal(neighbour_lookup(table, x[0], offsets), expected)
