import numpy as np
import pytest

from fracbnn import bitpack, kernels, oracle
from fracbnn.bitpack import PackedWeights
from fracbnn.errors import ShapeError
from fracbnn.fixedpoint import ONE, Diagnostics, from_float
from fracbnn.kernels import (
    DELTA_ALWAYS_CLOSED,
    DELTA_ALWAYS_OPEN,
    FixedFeatureMap,
    FracActivation,
    IntFeatureMap,
)


def bipolar(rng, shape):
    return (rng.integers(0, 2, shape) * 2 - 1).astype(np.int64)


def random_frac_activation(rng, shape):
    levels = np.array([-3, -1, 1, 3], dtype=np.int64)
    q = levels[rng.integers(0, 4, shape)]
    msb = np.where(q > 0, 1, -1)
    lsb = q - 2 * msb
    return q, FracActivation(msb=bitpack.pack(msb), lsb=bitpack.pack(lsb))


class TestBinaryConv:
    def test_padding_exclusion_single_tap(self):
        x = bitpack.pack(np.ones((1, 1, 1), dtype=np.int8))
        w = PackedWeights.from_dense(np.ones((1, 1, 3, 3), dtype=np.int8))
        out = kernels.binary_conv2d(x, w, stride=1, pad=1)
        assert out.values.shape == (1, 1, 1)
        assert out.values[0, 0, 0] == 1  # only the center tap is in bounds

    def test_self_correlation(self):
        rng = np.random.default_rng(0)
        wv = bipolar(rng, (1, 24, 3, 3))
        xv = np.tile(wv[0, :, 1:2, 1:2], (1, 5, 5))
        xv[:, 0::3, :] = wv[0, :, 0:1, 0:1]  # arbitrary texture, recheck via oracle
        out = kernels.binary_conv2d(bitpack.pack(xv), PackedWeights.from_dense(wv),
                                    stride=1, pad=0)
        assert np.array_equal(out.values, oracle.conv2d(xv, wv, 1, 0))

    def test_replicated_kernel_gives_9c(self):
        rng = np.random.default_rng(1)
        col = bipolar(rng, (16, 1, 1))
        xv = np.tile(col, (1, 4, 4))
        wv = np.tile(col[None, :, :, :], (1, 1, 3, 3))
        out = kernels.binary_conv2d(bitpack.pack(xv), PackedWeights.from_dense(wv),
                                    stride=1, pad=0)
        assert np.all(out.values == 9 * 16)

    def test_parity_invariant(self):
        rng = np.random.default_rng(2)
        for c in (1, 5, 64, 65):
            xv = bipolar(rng, (c, 5, 5))
            wv = bipolar(rng, (2, c, 3, 3))
            out = kernels.binary_conv2d(bitpack.pack(xv), PackedWeights.from_dense(wv),
                                        stride=1, pad=1).values
            nvalid = oracle.conv2d(np.ones_like(xv[:1]), np.ones((1, 1, 3, 3), dtype=np.int64),
                                   1, 1)[0]
            assert np.all(out % 2 == (nvalid * c) % 2)

    def test_rejects_channel_mismatch(self):
        x = bitpack.pack(np.ones((4, 3, 3), dtype=np.int8))
        w = PackedWeights.from_dense(np.ones((1, 5, 3, 3), dtype=np.int8))
        with pytest.raises(ShapeError):
            kernels.binary_conv2d(x, w)

    def test_rejects_pad_with_1x1(self):
        x = bitpack.pack(np.ones((4, 3, 3), dtype=np.int8))
        w = PackedWeights.from_dense(np.ones((1, 4, 1, 1), dtype=np.int8))
        with pytest.raises(ShapeError):
            kernels.binary_conv2d(x, w, pad=1)

    def test_matches_oracle_randomized(self):
        rng = np.random.default_rng(3)
        for c in (1, 63, 64, 65, 96, 128):
            for k, stride, pad in ((3, 1, 1), (3, 2, 1), (1, 1, 0), (1, 2, 0), (3, 1, 0)):
                xv = bipolar(rng, (c, 6, 7))
                wv = bipolar(rng, (4, c, k, k))
                got = kernels.binary_conv2d(bitpack.pack(xv),
                                            PackedWeights.from_dense(wv),
                                            stride=stride, pad=pad)
                assert np.array_equal(got.values, oracle.conv2d(xv, wv, stride, pad))


class TestFracConv:
    def test_all_closed_is_shifted_base(self):
        rng = np.random.default_rng(4)
        q, act = random_frac_activation(rng, (16, 5, 5))
        wv = bipolar(rng, (3, 16, 3, 3))
        pw = PackedWeights.from_dense(wv)
        delta = np.full(3, DELTA_ALWAYS_CLOSED, dtype=np.int32)
        res = kernels.frac_conv2d(act, pw, delta, stride=1, pad=1)
        base = kernels.binary_conv2d(act.msb, pw, stride=1, pad=1)
        assert np.array_equal(res.output.values, base.values * 2)
        assert res.sparsity == 1.0
        assert not res.update_mask.any()

    def test_all_open_is_dense_2bit_conv(self):
        rng = np.random.default_rng(5)
        q, act = random_frac_activation(rng, (16, 5, 5))
        wv = bipolar(rng, (3, 16, 3, 3))
        delta = np.full(3, DELTA_ALWAYS_OPEN, dtype=np.int32)
        res = kernels.frac_conv2d(act, PackedWeights.from_dense(wv), delta,
                                  stride=1, pad=1)
        assert np.array_equal(res.output.values, oracle.conv2d(q, wv, 1, 1))
        assert res.sparsity == 0.0
        assert res.update_mask.all()

    def test_decomposition_identity(self):
        # 2*dot(msb, w) + dot(lsb, w) == dot(2*msb + lsb, w), densely
        rng = np.random.default_rng(6)
        q, act = random_frac_activation(rng, (8, 4, 4))
        wv = bipolar(rng, (2, 8, 3, 3))
        msb = bitpack.unpack(act.msb).astype(np.int64)
        lsb = bitpack.unpack(act.lsb).astype(np.int64)
        lhs = 2 * oracle.conv2d(msb, wv, 1, 1) + oracle.conv2d(lsb, wv, 1, 1)
        assert np.array_equal(lhs, oracle.conv2d(q, wv, 1, 1))

    def test_gate_monotonicity(self):
        rng = np.random.default_rng(7)
        q, act = random_frac_activation(rng, (12, 6, 6))
        wv = bipolar(rng, (4, 12, 3, 3))
        pw = PackedWeights.from_dense(wv)
        prev_mask = None
        prev_sparsity = -1.0
        for d in (-40, -10, 0, 10, 40):
            res = kernels.frac_conv2d(act, pw, np.full(4, d, dtype=np.int32),
                                      stride=1, pad=1)
            if prev_mask is not None:
                assert np.all(res.update_mask <= prev_mask)  # never reopens
                assert res.sparsity >= prev_sparsity
            prev_mask, prev_sparsity = res.update_mask, res.sparsity

    def test_matches_oracle_randomized(self):
        rng = np.random.default_rng(8)
        for c in (1, 63, 64, 65, 96, 128):
            q, act = random_frac_activation(rng, (c, 5, 5))
            wv = bipolar(rng, (3, c, 3, 3))
            delta = rng.integers(-9 * c, 9 * c, 3).astype(np.int32)
            got = kernels.frac_conv2d(act, PackedWeights.from_dense(wv), delta,
                                      stride=2, pad=1)
            want_out, want_mask, want_sp = oracle.frac_conv(
                bitpack.unpack(act.msb).astype(np.int64),
                bitpack.unpack(act.lsb).astype(np.int64), wv, delta, 2, 1)
            assert np.array_equal(got.output.values, want_out)
            assert np.array_equal(got.update_mask, want_mask)
            assert got.sparsity == want_sp

    def test_rejects_bad_delta_length(self):
        rng = np.random.default_rng(9)
        _, act = random_frac_activation(rng, (4, 3, 3))
        pw = PackedWeights.from_dense(bipolar(rng, (2, 4, 3, 3)))
        with pytest.raises(ShapeError):
            kernels.frac_conv2d(act, pw, np.zeros(3, dtype=np.int32))


class TestQuantize2Bit:
    def test_tie_toward_positive_at_2p5(self):
        s = np.array([ONE], dtype=np.int32)
        x = FixedFeatureMap(np.array([[[int(2.5 * ONE)]]], dtype=np.int32))
        act = kernels.quantize2bit(x, s)
        assert bitpack.unpack(act.msb)[0, 0, 0] == 1
        assert bitpack.unpack(act.lsb)[0, 0, 0] == 1  # level +3

    def test_zero_resolves_positive(self):
        s = np.array([ONE], dtype=np.int32)
        act = kernels.quantize2bit(FixedFeatureMap(np.zeros((1, 1, 1), dtype=np.int32)), s)
        assert bitpack.unpack(act.msb)[0, 0, 0] == 1
        assert bitpack.unpack(act.lsb)[0, 0, 0] == -1  # level +1

    def test_nearest_level_randomized(self):
        rng = np.random.default_rng(10)
        raw = rng.integers(-5 * ONE, 5 * ONE, (7, 4, 4)).astype(np.int32)
        s = rng.integers(ONE // 4, 2 * ONE, 7).astype(np.int32)
        act = kernels.quantize2bit(FixedFeatureMap(raw), s)
        q = 2 * bitpack.unpack(act.msb).astype(np.int64) + bitpack.unpack(act.lsb)
        # exhaustive 4-level argmin check with positive tie-break
        for lv in (-3, -1, 1, 3):
            dist_q = np.abs(raw.astype(np.int64) - q * s[:, None, None])
            dist_lv = np.abs(raw.astype(np.int64) - lv * s[:, None, None])
            assert np.all((dist_q < dist_lv) | (dist_q == dist_lv)), lv
            ties = dist_q == dist_lv
            assert np.all(q[ties] >= lv)

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ShapeError):
            kernels.quantize2bit(FixedFeatureMap(np.zeros((1, 1, 1), dtype=np.int32)),
                                 np.zeros(1, dtype=np.int32))


class TestSignBinarize:
    def test_zero_maps_positive(self):
        x = FixedFeatureMap(np.array([[[0, -1], [1, -(1 << 15)]]], dtype=np.int32))
        dense = bitpack.unpack(kernels.sign_binarize(x))
        assert np.array_equal(dense[0], [[1, -1], [1, -1]])

    def test_matches_oracle(self):
        rng = np.random.default_rng(11)
        raw = rng.integers(-(1 << 20), 1 << 20, (9, 5, 5)).astype(np.int32)
        dense = bitpack.unpack(kernels.sign_binarize(FixedFeatureMap(raw)))
        assert np.array_equal(dense, oracle.sign_dense(raw))


class TestFixedPointOps:
    def test_batchnorm_identity(self):
        x = IntFeatureMap(np.array([[[5, -3]]], dtype=np.int32))
        y = kernels.batchnorm_apply(x, from_float([1.0]), from_float([0.0]))
        assert np.array_equal(y.raw, np.array([[[5 << 16, -3 << 16]]]))

    def test_batchnorm_zero_scale(self):
        x = IntFeatureMap(np.array([[[5, -3]]], dtype=np.int32))
        y = kernels.batchnorm_apply(x, from_float([0.0]), from_float([0.75]))
        assert np.all(y.raw == int(0.75 * ONE))

    def test_batchnorm_random_one_ulp(self):
        rng = np.random.default_rng(12)
        raw = rng.integers(-8 << 16, 8 << 16, (5, 4, 4)).astype(np.int32)
        scale = from_float(rng.uniform(-2, 2, 5))
        bias = from_float(rng.uniform(-1, 1, 5))
        got = kernels.batchnorm_apply(FixedFeatureMap(raw), scale, bias)
        want = oracle.batchnorm_fixed(raw, scale, bias)
        assert np.max(np.abs(got.raw.astype(np.int64) - want)) <= 1

    def test_bprelu_origin_translation(self):
        alpha = from_float([0.5])
        gamma = from_float([-0.25])
        x = FixedFeatureMap(np.array([[[int(0.5 * ONE)]]], dtype=np.int32))
        y = kernels.bprelu(x, alpha, from_float([0.3]), gamma)
        assert y.raw[0, 0, 0] == int(-0.25 * ONE)

    def test_bprelu_unit_slope_is_shift(self):
        rng = np.random.default_rng(13)
        raw = rng.integers(-4 << 16, 4 << 16, (3, 3, 3)).astype(np.int32)
        alpha = from_float(rng.uniform(-1, 1, 3))
        gamma = from_float(rng.uniform(-1, 1, 3))
        y = kernels.bprelu(FixedFeatureMap(raw), alpha, from_float([1.0] * 3), gamma)
        want = (raw.astype(np.int64) - alpha[:, None, None] + gamma[:, None, None])
        assert np.array_equal(y.raw, want)

    def test_bprelu_continuity_at_alpha(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            alpha = from_float(rng.uniform(-2, 2, 1))
            beta = from_float(rng.uniform(0, 2, 1))
            gamma = from_float(rng.uniform(-2, 2, 1))
            eps = np.array([[[int(alpha[0]) - 1, int(alpha[0]), int(alpha[0]) + 1]]],
                           dtype=np.int32)
            y = kernels.bprelu(FixedFeatureMap(eps), alpha, beta, gamma)
            assert y.raw[0, 0, 1] == gamma[0]
            assert abs(int(y.raw[0, 0, 2]) - int(y.raw[0, 0, 1])) <= 1
            assert abs(int(y.raw[0, 0, 0]) - int(y.raw[0, 0, 1])) <= 2

    def test_avgpool_constant(self):
        x = FixedFeatureMap(np.full((2, 4, 4), 12345, dtype=np.int32))
        assert np.all(kernels.avgpool2d(x).raw == 12345)

    def test_avgpool_exact_quarter(self):
        vals = np.array([[[1, 2], [3, 4]]], dtype=np.int32) << 16
        y = kernels.avgpool2d(FixedFeatureMap(vals))
        assert y.raw[0, 0, 0] == int(2.5 * ONE)

    def test_avgpool_rejects_odd_dims(self):
        with pytest.raises(ShapeError):
            kernels.avgpool2d(FixedFeatureMap(np.zeros((1, 3, 4), dtype=np.int32)))

    def test_avgpool_random_one_ulp(self):
        rng = np.random.default_rng(15)
        raw = rng.integers(-8 << 16, 8 << 16, (3, 6, 8)).astype(np.int32)
        got = kernels.avgpool2d(FixedFeatureMap(raw))
        assert np.max(np.abs(got.raw.astype(np.int64) - oracle.avgpool_fixed(raw))) <= 1

    def test_channel_duplicate_layout(self):
        raw = np.arange(16 * 2 * 2, dtype=np.int32).reshape(16, 2, 2)
        y = kernels.channel_duplicate(FixedFeatureMap(raw))
        assert y.dims[0] == 32
        for c in range(32):
            assert np.array_equal(y.raw[c], raw[c % 16])

    def test_shortcut_add(self):
        rng = np.random.default_rng(16)
        a = rng.integers(-4 << 16, 4 << 16, (3, 2, 2)).astype(np.int32)
        b = rng.integers(-4 << 16, 4 << 16, (3, 2, 2)).astype(np.int32)
        y = kernels.shortcut_add(FixedFeatureMap(a), FixedFeatureMap(b))
        assert np.array_equal(y.raw, a.astype(np.int64) + b)
        zero = FixedFeatureMap(np.zeros_like(a))
        assert np.array_equal(kernels.shortcut_add(FixedFeatureMap(a), zero).raw, a)

    def test_saturation_diagnostics(self):
        diag = Diagnostics()
        big = np.full((1, 1, 2), (1 << 31) - 10, dtype=np.int32)
        y = kernels.shortcut_add(FixedFeatureMap(big), FixedFeatureMap(big), diag)
        assert diag.saturations == 2
        assert np.all(y.raw == (1 << 31) - 1)


class TestClassifier:
    def test_identity_weights(self):
        f = np.array([3, -7, 11], dtype=np.int32)
        w = np.eye(3, dtype=np.int8)
        logits = kernels.linear_classifier(f, w, np.zeros(3, dtype=np.int32))
        assert np.array_equal(logits, f)

    def test_zero_features_gives_bias(self):
        bias = np.array([5, -9], dtype=np.int32)
        logits = kernels.linear_classifier(np.zeros(4, dtype=np.int32),
                                           np.ones((2, 4), dtype=np.int8), bias)
        assert np.array_equal(logits, bias)

    def test_matches_oracle(self):
        rng = np.random.default_rng(17)
        f = rng.integers(-4 << 16, 4 << 16, 64).astype(np.int32)
        w = rng.integers(-127, 128, (10, 64)).astype(np.int8)
        b = rng.integers(-1 << 20, 1 << 20, 10).astype(np.int32)
        got = kernels.linear_classifier(f, w, b)
        assert np.array_equal(got, oracle.linear_classifier_dense(f, w, b).astype(np.int32))

    def test_rejects_dim_mismatch(self):
        with pytest.raises(ShapeError):
            kernels.linear_classifier(np.zeros(4, dtype=np.int32),
                                      np.ones((2, 5), dtype=np.int8),
                                      np.zeros(2, dtype=np.int32))
