"""Dense residual-motion estimation with pyramidal Lucas-Kanade.

Handles the small local motions left after projective alignment (slight
capture desync, lens distortion, calibration error). Deterministic by
construction: fixed pyramid, fixed iteration counts, no randomness.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .imagekit import (
    Raster,
    gaussian_blur_plane,
    luma64,
    resample_plane,
    sample_bicubic,
)

DEFAULT_LEVELS = 3
DEFAULT_WINDOW = 15
DEFAULT_ITERS = 10
EIGEN_THRESHOLD = 1e-4

_MAGIC = b"RWFL"


@dataclass
class FlowField:
    """Per-pixel displacement maps; invalid pixels carry u = v = 0."""

    u: np.ndarray  # (h, w) float32
    v: np.ndarray  # (h, w) float32
    valid: np.ndarray  # (h, w) bool

    def __post_init__(self):
        if not (self.u.shape == self.v.shape == self.valid.shape):
            raise ContractViolation("flow plane shapes disagree")
        if np.any(self.u[~self.valid] != 0.0) or np.any(self.v[~self.valid] != 0.0):
            raise ContractViolation("invalid flow pixels must carry zero displacement")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]


def _box_sum(plane: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^2 window, truncated at borders (integral image)."""
    h, w = plane.shape
    integ = np.zeros((h + 1, w + 1), dtype=np.float64)
    np.cumsum(np.cumsum(plane, axis=0), axis=1, out=integ[1:, 1:])
    ys = np.arange(h)
    xs = np.arange(w)
    y0 = np.clip(ys - radius, 0, h)[:, None]
    y1 = np.clip(ys + radius + 1, 0, h)[:, None]
    x0 = np.clip(xs - radius, 0, w)[None, :]
    x1 = np.clip(xs + radius + 1, 0, w)[None, :]
    return integ[y1, x1] - integ[y0, x1] - integ[y1, x0] + integ[y0, x0]


def _window_counts(h: int, w: int, radius: int) -> np.ndarray:
    return _box_sum(np.ones((h, w), dtype=np.float64), radius)


def _gradients(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = np.zeros_like(plane)
    gy = np.zeros_like(plane)
    gx[:, 1:-1] = 0.5 * (plane[:, 2:] - plane[:, :-2])
    gx[:, 0] = plane[:, 1] - plane[:, 0]
    gx[:, -1] = plane[:, -1] - plane[:, -2]
    gy[1:-1, :] = 0.5 * (plane[2:, :] - plane[:-2, :])
    gy[0, :] = plane[1, :] - plane[0, :]
    gy[-1, :] = plane[-1, :] - plane[-2, :]
    return gx, gy


def _downsample(plane: np.ndarray) -> np.ndarray:
    return gaussian_blur_plane(plane, 5, 1.0)[::2, ::2].copy()


def compute_flow(
    ref: Raster,
    mov: Raster,
    levels: int = DEFAULT_LEVELS,
    window: int = DEFAULT_WINDOW,
    iters: int = DEFAULT_ITERS,
    eigen_threshold: float = EIGEN_THRESHOLD,
) -> FlowField:
    """Flow (u, v) such that mov sampled at (x + u, y + v) matches ref at (x, y).

    Coarse-to-fine Lucas-Kanade: Gaussian pyramid (sigma = 1, half size per
    level), iterative solution of the windowed 2x2 normal equations, flow
    doubled and upsampled between levels. Pixels whose structure tensor has
    a minimum eigenvalue below eigen_threshold (per-pixel normalized) are
    marked invalid and carry zero flow.
    """
    if (ref.height, ref.width) != (mov.height, mov.width):
        raise ContractViolation("ref/mov dims must match")
    if levels < 1:
        raise ContractViolation(f"levels must be >= 1, got {levels}")
    if window < 5 or window % 2 == 0:
        raise ContractViolation(f"window must be odd and >= 5, got {window}")

    ref_pyr = [luma64(ref)]
    mov_pyr = [luma64(mov)]
    for _ in range(levels - 1):
        if min(ref_pyr[-1].shape) < 2 * window:
            break
        ref_pyr.append(_downsample(ref_pyr[-1]))
        mov_pyr.append(_downsample(mov_pyr[-1]))

    radius = window // 2
    u = np.zeros_like(ref_pyr[-1])
    v = np.zeros_like(ref_pyr[-1])
    valid_finest = None
    for level in range(len(ref_pyr) - 1, -1, -1):
        r = ref_pyr[level]
        m = mov_pyr[level]
        h, w = r.shape
        if u.shape != r.shape:
            u = 2.0 * resample_plane(u, w, h)
            v = 2.0 * resample_plane(v, w, h)

        gx, gy = _gradients(r)
        counts = _window_counts(h, w, radius)
        gxx = _box_sum(gx * gx, radius)
        gxy = _box_sum(gx * gy, radius)
        gyy = _box_sum(gy * gy, radius)
        trace = gxx + gyy
        disc = np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy * gxy)
        mineig = 0.5 * (trace - disc) / counts
        # A pixel is solvable only with its full window inside the frame;
        # truncated border windows bias the normal equations off-center.
        full_window = counts == float(window * window)
        usable = (mineig > eigen_threshold) & full_window
        det = gxx * gyy - gxy * gxy
        safe_det = np.where(np.abs(det) < 1e-12, 1.0, det)

        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        ok = usable & (np.abs(det) >= 1e-12)
        for _ in range(iters):
            warped = sample_bicubic(m, np.clip(xs + u, 0, w - 1), np.clip(ys + v, 0, h - 1))
            it = warped - r
            b1 = _box_sum(gx * it, radius)
            b2 = _box_sum(gy * it, radius)
            du = -(gyy * b1 - gxy * b2) / safe_det
            dv = -(gxx * b2 - gxy * b1) / safe_det
            step_cap = float(window)
            du = np.clip(du, -step_cap, step_cap)
            dv = np.clip(dv, -step_cap, step_cap)
            # Smoothing the updated field damps the high-frequency noise a
            # per-pixel warp would otherwise amplify iteration over iteration.
            u = gaussian_blur_plane(np.where(ok, u + du, u), 9, 1.5)
            v = gaussian_blur_plane(np.where(ok, v + dv, v), 9, 1.5)
        if level == 0:
            valid_finest = usable

    assert valid_finest is not None
    u = np.where(valid_finest, u, 0.0).astype(np.float32)
    v = np.where(valid_finest, v, 0.0).astype(np.float32)
    return FlowField(u=u, v=v, valid=valid_finest)


def warp_with_flow(img: Raster, flow: FlowField) -> Raster:
    """Backward bicubic warp at (x + u, y + v); invalid pixels pass through."""
    if (flow.height, flow.width) != (img.height, img.width):
        raise ContractViolation("flow dims must match image dims")
    h, w = img.height, img.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = np.clip(xs + flow.u.astype(np.float64), 0, w - 1)
    sy = np.clip(ys + flow.v.astype(np.float64), 0, h - 1)
    data = img.data.astype(np.float64)
    out = np.stack(
        [sample_bicubic(data[:, :, c], sx, sy) for c in range(img.channels)], axis=2
    )
    out[~flow.valid] = data[~flow.valid]
    if img.depth == "U8":
        return Raster(np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8))
    return Raster(np.clip(out, 0.0, 1.0).astype(np.float32))


def residual_map(a: Raster, b: Raster, blur_sigma: float = 1.0) -> Raster:
    """|luma(a) - luma(b)| after Gaussian pre-blur; misalignment evidence."""
    if (a.height, a.width) != (b.height, b.width):
        raise ContractViolation("image dims must match")
    if blur_sigma <= 0:
        raise ContractViolation(f"blur_sigma must be > 0, got {blur_sigma}")
    size = 2 * int(np.ceil(3.0 * blur_sigma)) + 1
    ya = gaussian_blur_plane(luma64(a), size, blur_sigma)
    yb = gaussian_blur_plane(luma64(b), size, blur_sigma)
    return Raster(np.abs(ya - yb).astype(np.float32)[:, :, np.newaxis])


def flow_to_bytes(flow: FlowField) -> bytes:
    """Little-endian blob: magic, dims, f32 u plane, f32 v plane, u8 valid."""
    head = _MAGIC + struct.pack("<II", flow.width, flow.height)
    return (
        head
        + flow.u.astype("<f4").tobytes()
        + flow.v.astype("<f4").tobytes()
        + flow.valid.astype(np.uint8).tobytes()
    )


def flow_from_bytes(blob: bytes) -> FlowField:
    if len(blob) < 12 or blob[:4] != _MAGIC:
        raise ContractViolation("not a flow blob")
    w, h = struct.unpack("<II", blob[4:12])
    if w < 1 or h < 1:
        raise ContractViolation(f"flow blob has empty dims {w}x{h}")
    plane = h * w
    expected = 12 + plane * 4 * 2 + plane
    if len(blob) != expected:
        raise ContractViolation(
            f"flow blob size mismatch: expected {expected} bytes, got {len(blob)}"
        )
    u = np.frombuffer(blob, dtype="<f4", count=plane, offset=12).reshape(h, w)
    v = np.frombuffer(blob, dtype="<f4", count=plane, offset=12 + plane * 4).reshape(h, w)
    valid = (
        np.frombuffer(blob, dtype=np.uint8, count=plane, offset=12 + plane * 8)
        .reshape(h, w)
        .astype(bool)
    )
    return FlowField(u=u.astype(np.float32), v=v.astype(np.float32), valid=valid)
