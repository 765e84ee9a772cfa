import math

import numpy as np
import pytest

from dualcam.errors import ContractViolation, NoStatisticsError
from dualcam.imagekit import Raster, gaussian_blur
from dualcam.quality import MetricsReport, lowfreq_fidelity, psnr, report, ssim
from conftest import make_texture


def ssim_oracle(a: Raster, b: Raster) -> float:
    """Direct per-window SSIM from the defining formula (independent path)."""
    from dualcam.imagekit import luma64

    ya = luma64(a) * 255.0
    yb = luma64(b) * 255.0
    half = 5
    coords = np.arange(-half, half + 1, dtype=np.float64)
    g2 = np.exp(-np.add.outer(coords**2, coords**2) / (2.0 * 1.5**2))
    w = g2 / g2.sum()
    c1 = (0.01 * 255.0) ** 2
    c2 = (0.03 * 255.0) ** 2
    h, wd = ya.shape
    vals = []
    for r in range(half, h - half):
        for c in range(half, wd - half):
            wa = ya[r - half : r + half + 1, c - half : c + half + 1]
            wb = yb[r - half : r + half + 1, c - half : c + half + 1]
            mu_a = (w * wa).sum()
            mu_b = (w * wb).sum()
            var_a = (w * (wa - mu_a) ** 2).sum()
            var_b = (w * (wb - mu_b) ** 2).sum()
            cov = (w * (wa - mu_a) * (wb - mu_b)).sum()
            vals.append(
                ((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
            )
    return float(np.mean(vals))


class TestPsnr:
    def test_identical_capped(self, rng):
        img = make_texture(rng, 16, 16)
        assert psnr(img, img) == 99.0

    def test_constant_offset_closed_form(self, rng):
        a = rng.integers(0, 236, size=(32, 32, 3), dtype=np.uint8)
        b = (a + 10).astype(np.uint8)  # no clamping by construction
        expected = 10.0 * math.log10(255.0**2 / 100.0)
        assert abs(psnr(Raster(a), Raster(b)) - expected) < 1e-12
        assert abs(expected - 28.1308) < 1e-4

    def test_mask_excludes_corrupted_half(self, rng):
        a = make_texture(rng, 24, 32)
        b_data = a.data.copy()
        b_data[:, 16:] = 0  # corrupt right half
        b = Raster(b_data)
        mask = np.zeros((24, 32, 1), dtype=np.uint8)
        mask[:, 16:] = 255
        masked = psnr(a, b, Raster(mask))
        left_only = psnr(
            Raster(np.ascontiguousarray(a.data[:, :16])),
            Raster(np.ascontiguousarray(b.data[:, :16])),
        )
        assert masked == left_only

    def test_no_valid_pixels(self, rng):
        img = make_texture(rng, 8, 8)
        mask = Raster(np.full((8, 8, 1), 255, dtype=np.uint8))
        with pytest.raises(NoStatisticsError):
            psnr(img, img, mask)

    def test_symmetry(self, rng):
        a = make_texture(rng, 16, 16)
        b = make_texture(np.random.default_rng(99), 16, 16)
        assert abs(psnr(a, b) - psnr(b, a)) < 1e-12

    def test_dim_mismatch(self, rng):
        a = make_texture(rng, 8, 8)
        b = make_texture(rng, 8, 9)
        with pytest.raises(ContractViolation):
            psnr(a, b)


class TestSsim:
    def test_identical_is_exactly_one(self, rng):
        img = make_texture(rng, 24, 24)
        assert ssim(img, img) == 1.0

    def test_anticorrelated_checkerboard_negative(self):
        cells = ((np.indices((32, 32)).sum(axis=0) % 2) * 255).astype(np.uint8)
        a = Raster(np.repeat(cells[:, :, None], 3, axis=2))
        b = Raster(255 - a.data)
        val = ssim(a, b)
        assert val < 0
        assert abs(val - ssim_oracle(a, b)) < 1e-9

    def test_blurred_pair_matches_oracle(self, rng):
        a = make_texture(rng, 40, 40)
        b = gaussian_blur(a, 9, 2.0)
        val = ssim(a, b)
        assert 0.0 < val < 1.0
        assert abs(val - ssim_oracle(a, b)) < 1e-9

    def test_symmetry(self, rng):
        a = make_texture(rng, 20, 20)
        b = gaussian_blur(a, 5, 1.0)
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_all_valid_mask_equals_no_mask(self, rng):
        a = make_texture(rng, 20, 20)
        b = gaussian_blur(a, 5, 1.0)
        mask = Raster(np.zeros((20, 20, 1), dtype=np.uint8))
        assert ssim(a, b, mask) == ssim(a, b)
        assert psnr(a, b, mask) == psnr(a, b)

    def test_mask_without_valid_window(self, rng):
        a = make_texture(rng, 16, 16)
        mask = np.zeros((16, 16, 1), dtype=np.uint8)
        mask[8, :] = 255  # every 11x11 window crosses the bad row
        with pytest.raises(NoStatisticsError):
            ssim(a, a, Raster(mask))

    def test_too_small_rejected(self, rng):
        img = Raster(np.zeros((8, 8, 1), dtype=np.uint8))
        with pytest.raises(ContractViolation):
            ssim(img, img)

    def test_bounds_on_random_pairs(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            a = Raster(rng.integers(0, 256, size=(12, 12, 1), dtype=np.uint8))
            b = Raster(rng.integers(0, 256, size=(12, 12, 1), dtype=np.uint8))
            v = ssim(a, b)
            assert -1.0 <= v <= 1.0


class TestLowfreq:
    def test_identical_zero(self, rng):
        img = make_texture(rng, 16, 16)
        assert lowfreq_fidelity(img, img) == 0.0

    def test_constant_offset(self, rng):
        a = rng.integers(0, 236, size=(16, 16, 3), dtype=np.uint8)
        b = (a + 10).astype(np.uint8)
        val = lowfreq_fidelity(Raster(a), Raster(b))
        assert abs(val - 10.0 / 255.0) < 1e-6

    def test_blur_attenuates_alternation(self):
        cells = ((np.indices((16, 16)).sum(axis=0) % 2) * 255).astype(np.uint8)
        a = Raster(cells[:, :, None].copy())
        b = Raster(255 - a.data)
        raw_l1 = float(np.mean(np.abs(a.data.astype(np.float64) - b.data) / 255.0))
        assert lowfreq_fidelity(a, b) < raw_l1


def test_report_fields(rng):
    a = make_texture(rng, 16, 16)
    b = gaussian_blur(a, 3, 0.7)
    mask = np.zeros((16, 16, 1), dtype=np.uint8)
    mask[:2, :] = 255
    rep = report(a, b, Raster(mask))
    assert isinstance(rep, MetricsReport)
    assert 0 < rep.psnr_db <= 99.0
    assert -1.0 <= rep.ssim <= 1.0
    assert rep.valid_pixel_fraction == 14.0 / 16.0
    assert "psnr_db" in rep.to_json()
