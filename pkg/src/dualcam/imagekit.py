"""Core raster type, PNG codec, resampling, filtering, and crop primitives.

All operations are pure: identical inputs produce bit-identical outputs.
Border handling is clamp-to-edge throughout so no synthetic dark rims leak
into downstream color statistics.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import CodecError, ContractViolation

# BT.601 luma weights, pinned for reproducibility.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class Raster:
    """Planar image buffer: (height, width, channels) uint8 or float32.

    uint8 samples live in [0, 255]. float32 image content is conventionally
    normalized to [0, 1]; derived maps (gradient magnitudes, residuals) may
    exceed that range but must stay finite.
    """

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if d.ndim != 3:
            raise ContractViolation(f"raster data must be 3-d (h, w, c), got shape {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ContractViolation(f"raster dims must be >= 1, got {d.shape[1]}x{d.shape[0]}")
        if d.shape[2] not in (1, 3):
            raise ContractViolation(f"raster must have 1 or 3 channels, got {d.shape[2]}")
        if d.dtype == np.uint8:
            pass
        elif d.dtype == np.float32:
            if not np.all(np.isfinite(d)):
                raise ContractViolation("float raster contains non-finite samples")
        else:
            raise ContractViolation(f"raster dtype must be uint8 or float32, got {d.dtype}")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def depth(self) -> str:
        return "U8" if self.data.dtype == np.uint8 else "F32"

    @staticmethod
    def from_array(arr: np.ndarray) -> "Raster":
        """Wrap an array, promoting (h, w) grayscale to (h, w, 1)."""
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        return Raster(np.ascontiguousarray(arr))

    def to_float(self) -> "Raster":
        """U8 -> F32 in [0, 1]; F32 passes through."""
        if self.depth == "F32":
            return self
        return Raster((self.data.astype(np.float32) / np.float32(255.0)))

    def to_u8(self) -> "Raster":
        """F32 in [0, 1] -> U8 (round half to even); U8 passes through."""
        if self.depth == "U8":
            return self
        scaled = np.clip(self.data.astype(np.float64) * 255.0, 0.0, 255.0)
        return Raster(np.rint(scaled).astype(np.uint8))


def luma64(img: Raster) -> np.ndarray:
    """BT.601 luma as float64 in [0, 1], shape (h, w)."""
    d = img.data.astype(np.float64)
    if img.depth == "U8":
        d = d / 255.0
    if img.channels == 1:
        return d[:, :, 0]
    r, g, b = LUMA_WEIGHTS
    return r * d[:, :, 0] + g * d[:, :, 1] + b * d[:, :, 2]


# ---------------------------------------------------------------------------
# PNG codec (8-bit grayscale or RGB, non-interlaced only)
# ---------------------------------------------------------------------------

def _parse_ihdr(path: Path) -> tuple[int, int, int, int, int]:
    """Return (width, height, bit_depth, color_type, interlace) from the IHDR."""
    with open(path, "rb") as fh:
        head = fh.read(33)
    if len(head) < 33 or head[:8] != _PNG_SIGNATURE:
        raise CodecError(f"{path}: not a PNG file")
    length, ctype = struct.unpack(">I4s", head[8:16])
    if ctype != b"IHDR" or length != 13:
        raise CodecError(f"{path}: malformed PNG header")
    w, h, bit_depth, color_type, _comp, _filt, interlace = struct.unpack(
        ">IIBBBBB", head[16:29]
    )
    return w, h, bit_depth, color_type, interlace


def load_png(path: str | Path) -> Raster:
    """Load an 8-bit grayscale or RGB PNG. No color-profile transforms."""
    path = Path(path)
    w, h, bit_depth, color_type, interlace = _parse_ihdr(path)
    if bit_depth != 8:
        raise CodecError(f"{path}: unsupported depth {bit_depth}-bit (only 8-bit supported)")
    if interlace != 0:
        raise CodecError(f"{path}: interlaced PNG unsupported")
    if color_type not in (0, 2):  # 0=grayscale, 2=truecolor RGB
        raise CodecError(
            f"{path}: unsupported color type {color_type} (only grayscale and RGB)"
        )
    with Image.open(path) as im:
        im.load()
        arr = np.asarray(im, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[:, :, np.newaxis]
    if arr.shape[:2] != (h, w):
        raise CodecError(f"{path}: decoded size disagrees with header")
    return Raster(arr)


def save_png(img: Raster, path: str | Path) -> None:
    """Write a U8 raster as a non-interlaced PNG (deterministic encode)."""
    if img.depth != "U8":
        raise ContractViolation("save_png requires a U8 raster; convert with to_u8()")
    arr = img.data
    if img.channels == 1:
        pil = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = Image.fromarray(arr, mode="RGB")
    pil.save(Path(path), format="PNG", optimize=False, compress_level=6)


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def _cubic_weights(t: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Catmull-Rom (a = -0.5) weights for taps at offsets -1, 0, +1, +2."""
    w0 = ((-0.5 * t + 1.0) * t - 0.5) * t
    w1 = (1.5 * t - 2.5) * t * t + 1.0
    w2 = ((-1.5 * t + 2.0) * t + 0.5) * t
    w3 = (0.5 * t - 0.5) * t * t
    return w0, w1, w2, w3


def _resample_axis(data: np.ndarray, out_n: int, axis: int) -> np.ndarray:
    """Bicubic resample of float64 data along one axis, clamp-to-edge."""
    in_n = data.shape[axis]
    # Center-aligned source coordinates.
    x = (np.arange(out_n, dtype=np.float64) + 0.5) * (in_n / out_n) - 0.5
    base = np.floor(x)
    t = x - base
    base = base.astype(np.int64)
    weights = _cubic_weights(t)
    moved = np.moveaxis(data, axis, 0)
    out = np.zeros((out_n,) + moved.shape[1:], dtype=np.float64)
    for k, w in enumerate(weights):
        idx = np.clip(base + (k - 1), 0, in_n - 1)
        out += w.reshape((-1,) + (1,) * (moved.ndim - 1)) * moved[idx]
    return np.moveaxis(out, 0, axis)


def resample_bicubic(img: Raster, out_w: int, out_h: int) -> Raster:
    """Catmull-Rom bicubic resampling with center-aligned coordinate mapping."""
    if out_w < 1 or out_h < 1:
        raise ContractViolation(f"output dims must be >= 1, got {out_w}x{out_h}")
    data = img.data.astype(np.float64)
    data = _resample_axis(data, out_w, axis=1)
    data = _resample_axis(data, out_h, axis=0)
    return _restore_depth(data, img.depth)


def _restore_depth(data: np.ndarray, depth: str) -> Raster:
    if depth == "U8":
        return Raster(np.rint(np.clip(data, 0.0, 255.0)).astype(np.uint8))
    return Raster(np.clip(data, 0.0, 1.0).astype(np.float32))


def resample_plane(plane: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bicubic resample of a bare float64 plane, no range clamping."""
    if out_w < 1 or out_h < 1:
        raise ContractViolation(f"output dims must be >= 1, got {out_w}x{out_h}")
    data = _resample_axis(plane.astype(np.float64)[:, :, np.newaxis], out_w, axis=1)
    data = _resample_axis(data, out_h, axis=0)
    return data[:, :, 0]


def sample_bicubic(plane: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a float64 (h, w) plane at fractional coords, clamp-to-edge.

    xs/ys are arrays of identical shape; returns samples of that shape.
    """
    h, w = plane.shape
    bx = np.floor(xs)
    by = np.floor(ys)
    tx = xs - bx
    ty = ys - by
    bx = bx.astype(np.int64)
    by = by.astype(np.int64)
    wx = _cubic_weights(tx)
    wy = _cubic_weights(ty)
    out = np.zeros(xs.shape, dtype=np.float64)
    for j in range(4):
        row = np.clip(by + (j - 1), 0, h - 1)
        acc = np.zeros(xs.shape, dtype=np.float64)
        for i in range(4):
            col = np.clip(bx + (i - 1), 0, w - 1)
            acc += wx[i] * plane[row, col]
        out += wy[j] * acc
    return out


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel2D:
    """Square odd-sized kernel; smoothing kernels sum to 1 within 1e-9."""

    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] % 2 == 0:
            raise ContractViolation(f"kernel must be square with odd size, got {w.shape}")

    @property
    def size(self) -> int:
        return self.weights.shape[0]


def gaussian_kernel1d(size: int, sigma: float) -> np.ndarray:
    """Sampled Gaussian, normalized to sum 1 (float64)."""
    if size % 2 == 0:
        raise ContractViolation(f"kernel size must be odd, got {size}")
    if sigma <= 0:
        raise ContractViolation(f"sigma must be > 0, got {sigma}")
    r = size // 2
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_kernel2d(size: int, sigma: float) -> Kernel2D:
    if size % 2 == 0:
        raise ContractViolation(f"kernel size must be odd, got {size}")
    sq = np.arange(-(size // 2), size // 2 + 1, dtype=np.float64) ** 2
    g2 = np.exp(-np.add.outer(sq, sq) / (2.0 * sigma * sigma))
    return Kernel2D(g2 / g2.sum())


def _clamp_pad(plane: np.ndarray, r: int, axis: int) -> np.ndarray:
    pads = [(0, 0)] * plane.ndim
    pads[axis] = (r, r)
    return np.pad(plane, pads, mode="edge")


def _correlate_axis(data: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """1-d correlation along axis with clamp-to-edge borders (float64)."""
    r = len(taps) // 2
    padded = _clamp_pad(data, r, axis)
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(taps), axis=axis)
    return np.einsum("...k,k->...", windows, taps)


def convolve_separable(data: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable symmetric filtering (x then y) with clamp-to-edge."""
    out = _correlate_axis(data, taps, axis=1)
    return _correlate_axis(out, taps, axis=0)


def gaussian_blur(img: Raster, size: int, sigma: float) -> Raster:
    """Gaussian smoothing with a sampled, sum-1 kernel; clamp-to-edge."""
    taps = gaussian_kernel1d(size, sigma)
    data = img.data.astype(np.float64)
    out = np.stack(
        [convolve_separable(data[:, :, c], taps) for c in range(img.channels)], axis=2
    )
    return _restore_depth(out, img.depth)


def gaussian_blur_plane(plane: np.ndarray, size: int, sigma: float) -> np.ndarray:
    """gaussian_blur for a bare float64 (h, w) plane."""
    return convolve_separable(plane.astype(np.float64), gaussian_kernel1d(size, sigma))


_SOBEL_DERIV = np.array([-1.0, 0.0, 1.0])
_SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])


def sobel_magnitude(img: Raster) -> Raster:
    """Per-pixel sqrt(Gx^2 + Gy^2) of the 3x3 Sobel stencils on [0,1] luma."""
    y = luma64(img)
    gx = _correlate_axis(_correlate_axis(y, _SOBEL_DERIV, axis=1), _SOBEL_SMOOTH, axis=0)
    gy = _correlate_axis(_correlate_axis(y, _SOBEL_DERIV, axis=0), _SOBEL_SMOOTH, axis=1)
    mag = np.sqrt(gx * gx + gy * gy)
    return Raster(mag.astype(np.float32)[:, :, np.newaxis])


def center_crop(img: Raster, out_w: int, out_h: int) -> Raster:
    """Centered crop; origin floors the half-margin. Samples copied verbatim."""
    if out_w > img.width or out_h > img.height:
        raise ContractViolation(
            f"crop {out_w}x{out_h} exceeds image {img.width}x{img.height}"
        )
    x0 = (img.width - out_w) // 2
    y0 = (img.height - out_h) // 2
    return Raster(np.ascontiguousarray(img.data[y0 : y0 + out_h, x0 : x0 + out_w]))
