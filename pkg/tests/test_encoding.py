import numpy as np
import pytest

from fracbnn import bitpack
from fracbnn.encoding import (
    ThermometerConfig,
    correlation_experiment,
    draw_correlation_kernels,
    encode_image_bitplane,
    encode_image_rgb_sign,
    encode_image_thermometer,
    make_encoder,
    thermometer_encode_pixel,
)
from fracbnn.errors import EncodingError
from fracbnn.images import synthetic_images


class TestThermometerPixel:
    def test_fig7_case_p109_r32(self):
        vec = thermometer_encode_pixel(109, ThermometerConfig(32))
        assert vec.sum() == 3
        assert len(vec) == 8

    def test_zero_intensity(self):
        for r in (1, 8, 32):
            assert thermometer_encode_pixel(0, ThermometerConfig(r)).sum() == 0

    def test_full_intensity_r8(self):
        vec = thermometer_encode_pixel(255, ThermometerConfig(8))
        assert len(vec) == 32 and vec.sum() == 32

    def test_rejects_out_of_range(self):
        with pytest.raises(EncodingError):
            thermometer_encode_pixel(256, ThermometerConfig(8))
        with pytest.raises(EncodingError):
            thermometer_encode_pixel(-1, ThermometerConfig(8))

    def test_rejects_bad_resolution(self):
        with pytest.raises(EncodingError):
            ThermometerConfig(0)
        with pytest.raises(EncodingError):
            ThermometerConfig(256)

    @pytest.mark.parametrize("r", [1, 4, 8, 16, 32, 64])
    def test_ones_count_law_exhaustive(self, r):
        cfg = ThermometerConfig(r)
        prev_ones = np.zeros(cfg.length, dtype=np.uint8)
        for p in range(256):
            vec = thermometer_encode_pixel(p, cfg)
            want = int(np.floor(p / r + 0.5))  # round half away from zero, p >= 0
            assert vec.sum() == want, (p, r)
            # ones fill from the top of the vector
            assert vec[cfg.length - vec.sum():].all() or vec.sum() == 0
            # monotone subset property
            assert np.all(prev_ones <= vec)
            prev_ones = vec

    def test_dot_product_law_full_resolution(self):
        cfg = ThermometerConfig(1)
        assert cfg.length == 255
        for p1 in (0, 1, 17, 128, 254, 255):
            for p2 in (0, 3, 90, 255):
                a = thermometer_encode_pixel(p1, cfg).astype(int) * 2 - 1
                b = thermometer_encode_pixel(p2, cfg).astype(int) * 2 - 1
                assert int(a @ b) == 255 - 2 * abs(p1 - p2)


class TestImageEncoders:
    def test_black_pixel_all_minus_one(self):
        img = np.zeros((1, 1, 3), dtype=np.uint8)
        plane = encode_image_thermometer(img, ThermometerConfig(8))
        assert plane.channels == 96
        assert np.all(bitpack.unpack(plane) == -1)

    def test_white_pixel_all_plus_one(self):
        img = np.full((1, 1, 3), 255, dtype=np.uint8)
        plane = encode_image_thermometer(img, ThermometerConfig(8))
        assert np.all(bitpack.unpack(plane) == 1)

    def test_matches_pixel_encoder(self):
        rng = np.random.default_rng(2)
        img = rng.integers(0, 256, (2, 2, 3), dtype=np.uint8)
        cfg = ThermometerConfig(8)
        dense = bitpack.unpack(encode_image_thermometer(img, cfg))
        for y in range(2):
            for x in range(2):
                for color in range(3):
                    want = thermometer_encode_pixel(int(img[y, x, color]), cfg)
                    got = dense[color * 32 : (color + 1) * 32, y, x]
                    assert np.array_equal(got, want.astype(int) * 2 - 1)

    def test_rejects_empty_image(self):
        with pytest.raises(EncodingError):
            encode_image_thermometer(np.zeros((0, 2, 3), dtype=np.uint8),
                                     ThermometerConfig(8))

    def test_bitplane_digit_extraction(self):
        img = np.zeros((1, 1, 3), dtype=np.uint8)
        img[0, 0, 0] = 0b10110100
        dense = bitpack.unpack(encode_image_bitplane(img))
        assert np.array_equal(dense[:8, 0, 0], [1, -1, 1, 1, -1, 1, -1, -1])
        assert np.all(dense[8:, 0, 0] == -1)  # pixel 0 in G and B

    def test_bitplane_reconstruction_exhaustive(self):
        img = np.zeros((16, 16, 3), dtype=np.uint8)
        img[:, :, 1] = np.arange(256).reshape(16, 16)
        dense = bitpack.unpack(encode_image_bitplane(img))
        bits = (dense[8:16] + 1) // 2
        weights = 2 ** np.arange(7, -1, -1)
        recon = np.tensordot(weights, bits, axes=(0, 0))
        assert np.array_equal(recon, img[:, :, 1].astype(np.int64))

    def test_rgb_sign(self):
        img = np.array([[[0, 127, 128]], [[255, 128, 1]]], dtype=np.uint8)
        dense = bitpack.unpack(encode_image_rgb_sign(img))
        assert np.array_equal(dense[:, 0, 0], [-1, -1, 1])
        assert np.array_equal(dense[:, 1, 0], [1, 1, -1])

    def test_make_encoder_unknown(self):
        with pytest.raises(EncodingError):
            make_encoder("nope")


class TestCorrelationExperiment:
    @pytest.mark.parametrize("encoder,weight", [("thermometer", -2.5),
                                                ("rgb_sign", 0.75),
                                                ("bitplane", 1.5)])
    def test_single_nonzero_weight_perfect_correlation(self, encoder, weight):
        imgs = synthetic_images(5, 25)
        channels = {"thermometer": 96, "rgb_sign": 3, "bitplane": 24}[encoder]
        kernels = np.zeros((1, channels, 3, 3))
        kernels[0, channels // 2, 1, 2] = weight
        res = correlation_experiment(imgs, kernels, make_encoder(encoder),
                                     windows_per_image=40, seed=1)
        assert res.n_pairs == 1000
        assert abs(res.r) == pytest.approx(1.0, abs=1e-12)
        assert res.r > 0  # positive scale: sign never flips the ordering

    def test_thermometer_beats_rgb(self):
        imgs = synthetic_images(6, 10)
        rng = np.random.default_rng(2)
        k_th = draw_correlation_kernels(rng, 96, 8, "sign_committed")
        k_rgb = draw_correlation_kernels(rng, 3, 8, "gaussian")
        r_th = correlation_experiment(imgs, k_th, make_encoder("thermometer"),
                                      windows_per_image=25, seed=3).r
        r_rgb = correlation_experiment(imgs, k_rgb, make_encoder("rgb_sign"),
                                       windows_per_image=25, seed=3).r
        assert r_th > r_rgb

    def test_requires_enough_pairs(self):
        imgs = synthetic_images(5, 1)
        kernels = np.zeros((1, 96, 3, 3))
        with pytest.raises(ValueError, match="1000"):
            correlation_experiment(imgs, kernels, make_encoder("thermometer"),
                                   windows_per_image=10, seed=0)

    def test_degenerate_sample_signalled(self):
        imgs = [np.zeros((8, 8, 3), dtype=np.uint8)] * 4  # constant windows
        kernels = np.ones((8, 96, 3, 3))
        res = correlation_experiment(imgs, kernels, make_encoder("thermometer"),
                                     windows_per_image=40, seed=0)
        assert res.degenerate and np.isnan(res.r)
