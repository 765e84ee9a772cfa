"""Mask-aware image fidelity metrics: PSNR, single-scale SSIM, low-frequency L1.

PSNR is computed on all channels; SSIM on BT.601 luma. A mask marks pixels
valid where 0 and problematic where 255; problematic pixels are excluded
from every statistic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, NoStatisticsError
from .imagekit import Raster, gaussian_blur, gaussian_kernel1d, luma64

PSNR_CAP_DB = 99.0

# Canonical single-scale SSIM constants.
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


@dataclass(frozen=True)
class MetricsReport:
    psnr_db: float
    ssim: float
    lowfreq_l1: float
    valid_pixel_fraction: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "psnr_db": self.psnr_db,
                "ssim": self.ssim,
                "lowfreq_l1": self.lowfreq_l1,
                "valid_pixel_fraction": self.valid_pixel_fraction,
            }
        )


def _check_pair(a: Raster, b: Raster) -> None:
    if (a.height, a.width, a.channels) != (b.height, b.width, b.channels):
        raise ContractViolation(
            f"image dims differ: {a.width}x{a.height}x{a.channels} vs "
            f"{b.width}x{b.height}x{b.channels}"
        )


def _valid_map(a: Raster, mask: Raster | None) -> np.ndarray:
    """Boolean (h, w) validity; mask pixels are valid where 0."""
    if mask is None:
        return np.ones((a.height, a.width), dtype=bool)
    if mask.channels != 1:
        raise ContractViolation("mask must be single-channel")
    if (mask.height, mask.width) != (a.height, a.width):
        raise ContractViolation("mask dims must match image dims")
    return mask.data[:, :, 0] == 0


def _to_255(img: Raster) -> np.ndarray:
    d = img.data.astype(np.float64)
    return d if img.depth == "U8" else d * 255.0


def psnr(a: Raster, b: Raster, mask: Raster | None = None) -> float:
    """PSNR in dB over valid pixels of all channels, MAX = 255, capped at 99."""
    _check_pair(a, b)
    valid = _valid_map(a, mask)
    n = int(valid.sum())
    if n == 0:
        raise NoStatisticsError("no valid pixels for PSNR")
    diff = _to_255(a)[valid] - _to_255(b)[valid]
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(255.0 ** 2 / mse), PSNR_CAP_DB)


def _windowed(plane: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Valid-mode separable correlation: output (h-win+1, w-win+1)."""
    win = len(taps)
    out = np.einsum(
        "...k,k->...", np.lib.stride_tricks.sliding_window_view(plane, win, axis=1), taps
    )
    return np.einsum(
        "...k,k->...", np.lib.stride_tricks.sliding_window_view(out, win, axis=0), taps
    )


def ssim(a: Raster, b: Raster, mask: Raster | None = None) -> float:
    """Mean single-scale SSIM on luma over fully valid 11x11 windows."""
    _check_pair(a, b)
    if a.height < SSIM_WINDOW or a.width < SSIM_WINDOW:
        raise ContractViolation(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM"
        )
    ya = luma64(a) * 255.0
    yb = luma64(b) * 255.0
    taps = gaussian_kernel1d(SSIM_WINDOW, SSIM_SIGMA)

    mu_a = _windowed(ya, taps)
    mu_b = _windowed(yb, taps)
    e_aa = _windowed(ya * ya, taps)
    e_bb = _windowed(yb * yb, taps)
    e_ab = _windowed(ya * yb, taps)
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b

    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    ssim_map = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )

    valid = _valid_map(a, mask)
    ones = np.ones(SSIM_WINDOW, dtype=np.float64)
    bad_in_window = _windowed((~valid).astype(np.float64), ones)
    usable = bad_in_window == 0.0
    if not usable.any():
        raise NoStatisticsError("no fully valid SSIM window")
    return float(np.mean(ssim_map[usable]))


def lowfreq_fidelity(a: Raster, b: Raster) -> float:
    """Mean |blur(a) - blur(b)| with a 3x3 sigma=0.5 Gaussian, in [0,1] units."""
    _check_pair(a, b)
    fa = gaussian_blur(a.to_float(), 3, 0.5).data.astype(np.float64)
    fb = gaussian_blur(b.to_float(), 3, 0.5).data.astype(np.float64)
    return float(np.mean(np.abs(fa - fb)))


def report(a: Raster, b: Raster, mask: Raster | None = None) -> MetricsReport:
    valid = _valid_map(a, mask)
    return MetricsReport(
        psnr_db=psnr(a, b, mask),
        ssim=ssim(a, b, mask),
        lowfreq_l1=lowfreq_fidelity(a, b),
        valid_pixel_fraction=float(valid.mean()),
    )
