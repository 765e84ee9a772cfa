import numpy as np
import pytest

from dualcam.errors import AlignmentError, ContractViolation
from dualcam.fusion import (
    ConfidenceMap,
    align_reference,
    confidence_to_raster,
    detail_transfer,
    edge_confidence,
    fuse_pair,
)
from dualcam.imagekit import (
    Raster,
    center_crop,
    convolve_separable,
    gaussian_blur,
    gaussian_kernel1d,
    resample_bicubic,
)
from dualcam.quality import psnr
from conftest import make_blob_field, make_texture


class TestEdgeConfidence:
    def test_constant_zero(self):
        img = Raster(np.full((32, 32, 3), 120, dtype=np.uint8))
        c = edge_confidence(img)
        assert np.all(c.c == 0.0)

    def test_step_edge_ridge(self):
        arr = np.zeros((64, 64, 1), dtype=np.uint8)
        arr[:, 32:] = 200
        c = edge_confidence(Raster(arr))
        assert c.c[32, 31:34].max() > 0.5
        assert np.all(c.c[:, :20] == 0.0)
        assert np.all(c.c[:, 45:] == 0.0)

    def test_huge_gain_saturates(self, rng):
        img = make_texture(rng, 32, 32)
        c = edge_confidence(img, gain=1e9)
        from dualcam.imagekit import sobel_magnitude

        mag = sobel_magnitude(img).data[:, :, 0].astype(np.float64)
        smooth = convolve_separable(mag, gaussian_kernel1d(11, 1.5))
        assert np.all(c.c[smooth > 1e-12] == 1.0)

    def test_bad_gain(self, rng):
        with pytest.raises(ContractViolation):
            edge_confidence(make_texture(rng, 8, 8), gain=0.0)


class TestDetailTransfer:
    def test_zero_confidence_bit_exact(self, rng):
        for seed in (1, 2, 3):
            local = np.random.default_rng(seed)
            w = Raster(local.integers(0, 256, size=(24, 24, 3), dtype=np.uint8))
            t = Raster(local.integers(0, 256, size=(24, 24, 3), dtype=np.uint8))
            c = ConfidenceMap(np.zeros((24, 24)))
            out = detail_transfer(w, t, c)
            np.testing.assert_array_equal(out.data, w.data)

    def test_self_detail_is_unsharp_mask(self, rng):
        w = make_texture(rng, 32, 32)
        c = ConfidenceMap(np.ones((32, 32)))
        out = detail_transfer(w, w, c, highpass_sigma=1.0)
        # oracle: classic unsharp mask w + (w - blur(w))
        wf = w.data.astype(np.float64)
        taps = gaussian_kernel1d(7, 1.0)
        blurred = np.stack(
            [convolve_separable(wf[:, :, ch], taps) for ch in range(3)], axis=2
        )
        oracle = np.rint(np.clip(2.0 * wf - blurred, 0, 255)).astype(np.uint8)
        np.testing.assert_array_equal(out.data, oracle)

    def test_blur_sharp_pair_improves(self, rng):
        sharp = make_blob_field(rng, 96, 96)
        w = gaussian_blur(sharp, 9, 2.0)
        c = edge_confidence(w)
        out = detail_transfer(w, sharp, c, highpass_sigma=2.0)
        assert psnr(out, sharp) > psnr(w, sharp)

    def test_output_range(self, rng):
        w = Raster(np.full((16, 16, 3), 250, dtype=np.uint8))
        t = Raster((np.indices((16, 16)).sum(axis=0) % 2 * 255).astype(np.uint8)[:, :, None].repeat(3, axis=2))
        out = detail_transfer(w, t, ConfidenceMap(np.ones((16, 16))))
        assert out.data.dtype == np.uint8  # clamped into range by contract

    def test_dim_mismatch(self, rng):
        w = make_texture(rng, 16, 16)
        t = make_texture(rng, 16, 17)
        with pytest.raises(ContractViolation):
            detail_transfer(w, t, ConfidenceMap(np.zeros((16, 16))))

    def test_confidence_validation(self):
        with pytest.raises(ContractViolation):
            ConfidenceMap(np.full((4, 4), 1.5))


class TestAlignReference:
    def test_identity_alignment(self, rng):
        w = make_blob_field(rng, 192, 192)
        aligned, validity = align_reference(w, w, min_matches=20)
        valid = validity.data[:, :, 0] == 0
        assert valid.mean() > 0.9
        assert psnr(aligned, w, validity) >= 35.0

    def test_known_warp_roundtrip(self, rng):
        w = make_blob_field(rng, 256, 256)
        crop = 128
        t = resample_bicubic(center_crop(w, crop, crop), 256, 256)
        aligned, validity = align_reference(w, t, min_matches=20)
        covered = validity.data[:, :, 0] == 0
        assert covered.any()
        assert psnr(aligned, w, validity) >= 35.0

    def test_disjoint_content_fails(self, rng):
        w = make_blob_field(rng, 128, 128)
        t = make_blob_field(np.random.default_rng(4242), 128, 128)
        with pytest.raises(AlignmentError):
            align_reference(w, t)


class TestFusePair:
    def test_end_to_end_coverage_safety(self, rng):
        w = make_blob_field(rng, 256, 256)
        t = resample_bicubic(center_crop(w, 128, 128), 256, 256)
        res = fuse_pair(w, t, min_matches=20)
        assert res.fused.width == 256 and res.fused.height == 256
        uncovered = res.validity.data[:, :, 0] != 0
        np.testing.assert_array_equal(res.fused.data[uncovered], w.data[uncovered])
        assert np.all(res.confidence.c[uncovered] == 0.0)

    def test_monotone_benefit_on_blur_sharp(self, rng):
        # highpass sigma matched to the degradation: where C saturates the
        # transfer reconstructs the sharp signal exactly
        sharp = make_blob_field(rng, 224, 224)
        w = gaussian_blur(sharp, 13, 2.0)
        res = fuse_pair(w, sharp, min_matches=20, highpass_sigma=2.0)
        assert psnr(res.fused, sharp) >= psnr(w, sharp)

    def test_confidence_raster_render(self, rng):
        c = ConfidenceMap(np.linspace(0, 1, 16).reshape(4, 4))
        r = confidence_to_raster(c)
        assert r.depth == "U8" and r.channels == 1
        assert r.data[0, 0, 0] == 0 and r.data[3, 3, 0] == 255
