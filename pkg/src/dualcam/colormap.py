"""Color alignment between capture devices via intensity lookup tables.

The per-channel table maps each source intensity level k to the mean target
intensity observed at pixels where the source equals k. Unpopulated levels
are filled by linear interpolation between populated neighbors, with the
end segments held constant. A joint-RGB binned 3D table handles channel
crosstalk that a per-channel table cannot represent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, NoStatisticsError
from .imagekit import Raster

LEVELS = 256


@dataclass
class ColorLUT:
    """Per-channel 256-entry mapping with population bookkeeping.

    values[c][k] is the gap-filled mean target intensity for source level k;
    counts[c][k] how many pixels contributed; populated[c][k] whether the
    entry came from data rather than interpolation.
    """

    values: np.ndarray  # (channels, 256) float64 in [0, 255]
    counts: np.ndarray  # (channels, 256) int64
    populated: np.ndarray  # (channels, 256) bool
    channels: int = field(init=False)

    def __post_init__(self):
        self.channels = self.values.shape[0]
        if not (self.values.shape == self.counts.shape == self.populated.shape):
            raise ContractViolation("LUT table shapes disagree")
        if self.values.shape[1] != LEVELS:
            raise ContractViolation(f"LUT must have {LEVELS} entries per channel")
        if not np.all(np.isfinite(self.values)):
            raise ContractViolation("LUT contains non-finite values")
        if self.values.min() < 0.0 or self.values.max() > 255.0:
            raise ContractViolation("LUT values out of [0, 255]")
        if np.any(self.counts[self.populated] < 1):
            raise ContractViolation("populated LUT entries must have count >= 1")

    def to_json(self) -> str:
        return json.dumps(
            {
                "values": self.values.tolist(),
                "counts": self.counts.tolist(),
                "populated": self.populated.astype(int).tolist(),
            }
        )


def _check_u8_pair(src: Raster, target: Raster) -> None:
    if src.depth != "U8" or target.depth != "U8":
        raise ContractViolation("color statistics require U8 rasters")
    if (src.height, src.width, src.channels) != (target.height, target.width, target.channels):
        raise ContractViolation("src/target dims must match")


def _roi_flat(src: Raster, roi: Raster | None) -> np.ndarray:
    if roi is None:
        return np.ones(src.height * src.width, dtype=bool)
    if (roi.height, roi.width) != (src.height, src.width) or roi.channels != 1:
        raise ContractViolation("roi dims must match images")
    flat = (roi.data[:, :, 0] == 0).reshape(-1)
    if not flat.any():
        raise NoStatisticsError("roi excludes every pixel")
    return flat


def _gap_fill(values: np.ndarray, populated: np.ndarray) -> np.ndarray:
    """Linear interpolation across gaps; clamped constant extension at ends."""
    filled = values.copy()
    idx = np.flatnonzero(populated)
    if idx.size == 0:
        # No statistics at all: identity mapping is the only sane default.
        return np.arange(LEVELS, dtype=np.float64)
    missing = np.flatnonzero(~populated)
    if missing.size:
        filled[missing] = np.interp(missing, idx, values[idx])
    return filled


def build_intensity_lut(src: Raster, target: Raster, roi: Raster | None = None) -> ColorLUT:
    """Per-channel mean-of-target at each populated source level, gap-filled."""
    _check_u8_pair(src, target)
    keep = _roi_flat(src, roi)
    values = np.zeros((src.channels, LEVELS), dtype=np.float64)
    counts = np.zeros((src.channels, LEVELS), dtype=np.int64)
    for c in range(src.channels):
        s = src.data[:, :, c].reshape(-1)[keep]
        t = target.data[:, :, c].reshape(-1)[keep].astype(np.float64)
        cnt = np.bincount(s, minlength=LEVELS)
        total = np.bincount(s, weights=t, minlength=LEVELS)
        pop = cnt > 0
        values[c, pop] = total[pop] / cnt[pop]
        counts[c] = cnt
    populated = counts > 0
    for c in range(src.channels):
        values[c] = _gap_fill(values[c], populated[c])
    return ColorLUT(values=values, counts=counts, populated=populated)


def apply_lut(img: Raster, lut: ColorLUT) -> Raster:
    """Per-pixel table lookup; rounds half to even back to U8."""
    if img.depth != "U8":
        raise ContractViolation("apply_lut requires a U8 raster")
    if img.channels != lut.channels:
        raise ContractViolation("image/LUT channel mismatch")
    out = np.empty_like(img.data)
    for c in range(img.channels):
        mapped = lut.values[c][img.data[:, :, c]]
        out[:, :, c] = np.rint(mapped).astype(np.uint8)
    return Raster(out)


def identity_lut(channels: int = 3) -> ColorLUT:
    ramp = np.tile(np.arange(LEVELS, dtype=np.float64), (channels, 1))
    return ColorLUT(
        values=ramp,
        counts=np.ones((channels, LEVELS), dtype=np.int64),
        populated=np.ones((channels, LEVELS), dtype=bool),
    )


@dataclass
class Lut3D:
    """Joint-RGB binned statistics: mean target RGB per occupied source cell."""

    bins: int
    means: np.ndarray  # (bins, bins, bins, 3) float64
    counts: np.ndarray  # (bins, bins, bins) int64


def _build_lut3d(src: Raster, target: Raster, bins: int) -> Lut3D:
    cell = src.data.astype(np.int64) * bins // 256  # (h, w, 3) in [0, bins)
    flat = (cell[:, :, 0] * bins + cell[:, :, 1]) * bins + cell[:, :, 2]
    flat = flat.reshape(-1)
    counts = np.bincount(flat, minlength=bins**3)
    means = np.zeros((bins**3, 3), dtype=np.float64)
    t = target.data.reshape(-1, 3).astype(np.float64)
    occupied = counts > 0
    for c in range(3):
        s = np.bincount(flat, weights=t[:, c], minlength=bins**3)
        means[occupied, c] = s[occupied] / counts[occupied]
    return Lut3D(
        bins=bins,
        means=means.reshape(bins, bins, bins, 3),
        counts=counts.reshape(bins, bins, bins),
    )


def build_apply_lut3d(src: Raster, target: Raster, bins: int = 32) -> Raster:
    """Map src through joint-RGB binned means, trilinearly interpolated.

    Pixels whose 8-cell neighborhood contains an empty cell fall back to the
    per-channel intensity table built from the same pair.
    """
    _check_u8_pair(src, target)
    if src.channels != 3:
        raise ContractViolation("3D LUT requires RGB images")
    if bins not in (1, 16, 32, 64):
        raise ContractViolation(f"bins must be one of 1, 16, 32, 64, got {bins}")

    lut3 = _build_lut3d(src, target, bins)
    fallback = build_intensity_lut(src, target)

    cell_width = 256.0 / bins
    pos = src.data.astype(np.float64) / cell_width - 0.5  # cell-center coords
    base = np.floor(pos).astype(np.int64)
    frac = pos - base

    h, w, _ = src.data.shape
    out = np.zeros((h, w, 3), dtype=np.float64)
    weight_from_empty = np.zeros((h, w), dtype=bool)
    for corner in range(8):
        dr = (corner >> 2) & 1
        dg = (corner >> 1) & 1
        db = corner & 1
        ir = np.clip(base[:, :, 0] + dr, 0, bins - 1)
        ig = np.clip(base[:, :, 1] + dg, 0, bins - 1)
        ib = np.clip(base[:, :, 2] + db, 0, bins - 1)
        wr = frac[:, :, 0] if dr else 1.0 - frac[:, :, 0]
        wg = frac[:, :, 1] if dg else 1.0 - frac[:, :, 1]
        wb = frac[:, :, 2] if db else 1.0 - frac[:, :, 2]
        wgt = wr * wg * wb
        out += wgt[:, :, None] * lut3.means[ir, ig, ib]
        weight_from_empty |= (lut3.counts[ir, ig, ib] == 0) & (wgt > 0)

    result = np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8)
    if weight_from_empty.any():
        fb = apply_lut(src, fallback).data
        result[weight_from_empty] = fb[weight_from_empty]
    return Raster(result)
