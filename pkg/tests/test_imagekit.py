import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from dualcam.errors import CodecError, ContractViolation
from dualcam.imagekit import (
    Raster,
    center_crop,
    gaussian_blur,
    gaussian_kernel1d,
    load_png,
    luma64,
    resample_bicubic,
    save_png,
    sobel_magnitude,
)
from conftest import make_texture, psnr_simple


# ---------------------------------------------------------------------------
# codec
# ---------------------------------------------------------------------------

class TestCodec:
    def test_known_2x2_rgb_roundtrip(self, tmp_path):
        arr = np.array(
            [[[255, 0, 0], [0, 255, 0]], [[0, 0, 255], [10, 20, 30]]], dtype=np.uint8
        )
        p = tmp_path / "t.png"
        save_png(Raster(arr), p)
        back = load_png(p)
        assert back.channels == 3
        np.testing.assert_array_equal(back.data, arr)

    def test_reencode_idempotent(self, tmp_path, rng):
        img = make_texture(rng, 24, 31)
        p1 = tmp_path / "a.png"
        p2 = tmp_path / "b.png"
        save_png(img, p1)
        save_png(load_png(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_grayscale_roundtrip(self, tmp_path, rng):
        arr = rng.integers(0, 256, size=(7, 5, 1), dtype=np.uint8)
        p = tmp_path / "g.png"
        save_png(Raster(arr), p)
        back = load_png(p)
        assert back.channels == 1
        np.testing.assert_array_equal(back.data, arr)

    def test_16bit_rejected(self, tmp_path):
        img = Image.new("I;16", (4, 4), 1000)
        p = tmp_path / "deep.png"
        img.save(p)
        with pytest.raises(CodecError, match="unsupported depth"):
            load_png(p)

    def test_interlaced_rejected(self, tmp_path):
        # Hand-built header: 8-bit RGB but interlace flag set.
        ihdr = struct.pack(">IIBBBBB", 4, 4, 8, 2, 0, 0, 1)
        chunk = struct.pack(">I", 13) + b"IHDR" + ihdr
        chunk += struct.pack(">I", zlib.crc32(chunk[4:]))
        p = tmp_path / "i.png"
        p.write_bytes(b"\x89PNG\r\n\x1a\n" + chunk)
        with pytest.raises(CodecError, match="interlaced"):
            load_png(p)

    def test_palette_rejected(self, tmp_path):
        img = Image.new("P", (16, 16))
        img.putpalette([v for i in range(256) for v in (i, 255 - i, i // 2)])
        img.putdata(list(range(256)))
        p = tmp_path / "p.png"
        img.save(p)
        with pytest.raises(CodecError, match="color type"):
            load_png(p)

    def test_not_png_rejected(self, tmp_path):
        p = tmp_path / "x.png"
        p.write_bytes(b"definitely not a png")
        with pytest.raises(CodecError, match="not a PNG"):
            load_png(p)

    def test_float_raster_write_rejected(self, tmp_path):
        img = Raster(np.zeros((2, 2, 1), dtype=np.float32))
        with pytest.raises(ContractViolation):
            save_png(img, tmp_path / "f.png")

    @settings(max_examples=40, deadline=None)
    @given(
        h=st.integers(1, 24),
        w=st.integers(1, 24),
        ch=st.sampled_from([1, 3]),
        seed=st.integers(0, 2**31),
    )
    def test_roundtrip_bit_exact_property(self, tmp_path_factory, h, w, ch, seed):
        arr = np.random.default_rng(seed).integers(0, 256, size=(h, w, ch), dtype=np.uint8)
        p = tmp_path_factory.mktemp("png") / "r.png"
        save_png(Raster(arr), p)
        np.testing.assert_array_equal(load_png(p).data, arr)


# ---------------------------------------------------------------------------
# resample_bicubic
# ---------------------------------------------------------------------------

class TestResample:
    def test_constant_preserved(self):
        img = Raster(np.full((16, 16, 3), 77, dtype=np.uint8))
        out = resample_bicubic(img, 64, 64)
        assert out.width == 64 and out.height == 64
        assert np.all(out.data == 77)

    def test_identity_dims_bit_identical(self, rng):
        img = make_texture(rng, 19, 23)
        out = resample_bicubic(img, 23, 19)
        np.testing.assert_array_equal(out.data, img.data)

    def test_linear_ramp_upscale_stays_linear(self):
        # Oracle: Catmull-Rom has linear precision, so for ramp v(x) = 4x the
        # 2x upscale must sample the analytic line at x_src = x/2 - 0.25,
        # i.e. v_out(x) = 2x - 1, away from the clamped borders.
        w = 32
        ramp = np.tile((4 * np.arange(w)).astype(np.uint8), (8, 1))
        out = resample_bicubic(Raster.from_array(ramp), 2 * w, 8)
        analytic = 2.0 * np.arange(2 * w) - 1.0
        interior = slice(4, 2 * w - 4)
        err = np.abs(out.data[4, interior, 0].astype(np.float64) - analytic[interior])
        assert err.max() <= 1.0

    def test_downup_roundtrip_psnr_on_bandlimited(self, rng):
        img = gaussian_blur(make_texture(rng, 96, 96), 7, 1.2)
        up = resample_bicubic(img, 192, 192)
        back = resample_bicubic(up, 96, 96)
        # Regression lock: measured 47.3 dB on this fixture.
        assert psnr_simple(back.data, img.data) >= 40.0

    def test_bad_dims_rejected(self):
        img = Raster(np.zeros((4, 4, 1), dtype=np.uint8))
        with pytest.raises(ContractViolation):
            resample_bicubic(img, 0, 4)


# ---------------------------------------------------------------------------
# gaussian_blur
# ---------------------------------------------------------------------------

class TestGaussianBlur:
    def test_constant_identity(self):
        img = Raster(np.full((9, 9, 3), 123, dtype=np.uint8))
        out = gaussian_blur(img, 3, 0.5)
        np.testing.assert_array_equal(out.data, img.data)

    def test_even_size_rejected(self):
        img = Raster(np.zeros((4, 4, 1), dtype=np.uint8))
        with pytest.raises(ContractViolation):
            gaussian_blur(img, 4, 0.5)

    def test_impulse_response_equals_kernel(self):
        # Oracle: sample exp(-r^2 / (2 sigma^2)) on the 3x3 grid, normalize.
        sigma = 0.5
        coords = np.array([-1.0, 0.0, 1.0])
        g2 = np.exp(-np.add.outer(coords**2, coords**2) / (2 * sigma * sigma))
        expected = g2 / g2.sum()

        impulse = np.zeros((5, 5, 1), dtype=np.float32)
        impulse[2, 2, 0] = 1.0
        out = gaussian_blur(Raster(impulse), 3, sigma)
        np.testing.assert_allclose(out.data[1:4, 1:4, 0], expected, atol=1e-12)
        assert np.all(out.data[0, :, 0] == 0) and np.all(out.data[:, 0, 0] == 0)

    def test_semigroup_two_small_blurs_equal_one(self, rng):
        img = gaussian_blur(make_texture(rng, 48, 48), 5, 1.5)
        twice = gaussian_blur(gaussian_blur(img, 5, 0.5), 5, 0.5)
        once = gaussian_blur(img, 5, np.sqrt(0.5))
        diff = np.abs(twice.data.astype(np.int16) - once.data.astype(np.int16))
        assert diff.max() <= 1

    def test_mean_preserved(self, rng):
        img = gaussian_blur(make_texture(rng, 128, 128), 5, 1.5)
        out = gaussian_blur(img, 5, 1.0)
        m_in = img.data.astype(np.float64).mean()
        m_out = out.data.astype(np.float64).mean()
        assert abs(m_out - m_in) / m_in < 1e-4

    def test_kernel_normalized(self):
        assert abs(gaussian_kernel1d(7, 1.3).sum() - 1.0) < 1e-9


# ---------------------------------------------------------------------------
# sobel_magnitude
# ---------------------------------------------------------------------------

class TestSobel:
    def test_constant_zero(self):
        img = Raster(np.full((8, 8, 3), 99, dtype=np.uint8))
        out = sobel_magnitude(img)
        assert out.channels == 1 and out.depth == "F32"
        assert np.all(out.data == 0.0)

    def test_vertical_step_magnitude(self):
        # Oracle: hand-apply the 3x3 stencils to a 0 -> 255 step on [0,1] luma.
        img = np.zeros((9, 32, 1), dtype=np.uint8)
        img[:, 16:, :] = 255
        gx_stencil = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
        gy_stencil = gx_stencil.T
        y = img[:, :, 0].astype(np.float64) / 255.0
        pad = np.pad(y, 1, mode="edge")
        expect = np.zeros_like(y)
        for r in range(y.shape[0]):
            for c in range(y.shape[1]):
                win = pad[r : r + 3, c : c + 3]
                # correlation with the stencil (not convolution)
                gx = float((win * gx_stencil).sum())
                gy = float((win * gy_stencil).sum())
                expect[r, c] = np.hypot(gx, gy)

        out = sobel_magnitude(Raster(img))
        np.testing.assert_allclose(out.data[:, :, 0], expect, atol=1e-12)
        assert abs(out.data[4, 15, 0] - 4.0) < 1e-6
        assert abs(out.data[4, 16, 0] - 4.0) < 1e-6

    def test_flip_symmetry(self, rng):
        img = make_texture(rng, 32, 33)
        sym = np.concatenate([img.data, img.data[:, ::-1]], axis=1)
        mag = sobel_magnitude(Raster(np.ascontiguousarray(sym))).data[:, :, 0]
        np.testing.assert_allclose(mag, mag[:, ::-1], atol=1e-9)


# ---------------------------------------------------------------------------
# center_crop
# ---------------------------------------------------------------------------

class TestCenterCrop:
    def test_production_dims_and_origin(self):
        arr = np.zeros((3072, 4096, 1), dtype=np.uint8)
        arr[:, :, 0] = (np.add.outer(np.arange(3072), np.arange(4096)) % 256).astype(np.uint8)
        out = center_crop(Raster(arr), 3496, 2472)
        assert (out.width, out.height) == (3496, 2472)
        np.testing.assert_array_equal(out.data, arr[300 : 300 + 2472, 300 : 300 + 3496])

    def test_crop_to_own_dims(self, rng):
        img = make_texture(rng, 11, 13)
        out = center_crop(img, 13, 11)
        np.testing.assert_array_equal(out.data, img.data)

    def test_5x5_to_3x3(self):
        arr = np.arange(25, dtype=np.uint8).reshape(5, 5, 1)
        out = center_crop(Raster(arr), 3, 3)
        np.testing.assert_array_equal(out.data, arr[1:4, 1:4])

    def test_too_large_rejected(self):
        img = Raster(np.zeros((4, 4, 1), dtype=np.uint8))
        with pytest.raises(ContractViolation):
            center_crop(img, 5, 4)


# ---------------------------------------------------------------------------
# cross-cutting
# ---------------------------------------------------------------------------

def test_ops_are_pure(rng):
    img = make_texture(rng, 20, 20)
    a = resample_bicubic(img, 33, 27)
    b = resample_bicubic(img, 33, 27)
    np.testing.assert_array_equal(a.data, b.data)
    a = gaussian_blur(img, 3, 0.5)
    b = gaussian_blur(img, 3, 0.5)
    np.testing.assert_array_equal(a.data, b.data)


def test_luma_range(rng):
    img = make_texture(rng, 8, 8)
    y = luma64(img)
    assert y.min() >= 0.0 and y.max() <= 1.0


def test_raster_validation():
    with pytest.raises(ContractViolation):
        Raster(np.zeros((0, 4, 1), dtype=np.uint8))
    with pytest.raises(ContractViolation):
        Raster(np.zeros((4, 4, 2), dtype=np.uint8))
    with pytest.raises(ContractViolation):
        Raster(np.zeros((4, 4, 1), dtype=np.float64))
    with pytest.raises(ContractViolation):
        Raster(np.full((4, 4, 1), np.nan, dtype=np.float32))
