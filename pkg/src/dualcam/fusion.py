"""Edge-guided detail transfer from a telephoto reference into a wide frame.

A deterministic baseline with the same dataflow as learned fusion networks:
an edge map gates where reference high-frequency content may be injected,
so textureless regions pass through untouched and cannot grow artifacts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colormap import apply_lut, build_intensity_lut
from .errors import AlignmentError, ContractViolation
from .flowalign import FlowField, compute_flow, warp_with_flow
from .imagekit import Raster, convolve_separable, gaussian_kernel1d, sobel_magnitude
from .registration import estimate_homography, match_descriptors
from .registration.homography import warp_projective
from .registration.sift import detect_and_describe

DEFAULT_SMOOTH_SIGMA = 1.5
DEFAULT_GAIN = 4.0
DEFAULT_HIGHPASS_SIGMA = 1.0


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-pixel fusion gate in [0, 1], aligned to the wide frame."""

    c: np.ndarray  # (h, w) float64

    def __post_init__(self):
        if self.c.ndim != 2:
            raise ContractViolation("confidence map must be 2-d")
        if self.c.size and (self.c.min() < 0.0 or self.c.max() > 1.0):
            raise ContractViolation("confidence values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return self.c.shape[0]

    @property
    def width(self) -> int:
        return self.c.shape[1]


def edge_confidence(
    w: Raster, smooth_sigma: float = DEFAULT_SMOOTH_SIGMA, gain: float = DEFAULT_GAIN
) -> ConfidenceMap:
    """Smoothed gradient magnitude, normalized by its 99th percentile.

    gain scales the normalized response before clamping to [0, 1]; large
    gain saturates everywhere the blurred magnitude is nonzero.
    """
    if gain <= 0:
        raise ContractViolation(f"gain must be > 0, got {gain}")
    mag = sobel_magnitude(w).data[:, :, 0].astype(np.float64)
    size = 2 * int(np.ceil(3.0 * smooth_sigma)) + 1
    smooth = convolve_separable(mag, gaussian_kernel1d(size, smooth_sigma))
    p99 = float(np.percentile(smooth, 99.0))
    if p99 <= 0.0:
        return ConfidenceMap(np.zeros_like(smooth))
    return ConfidenceMap(np.clip(gain * smooth / p99, 0.0, 1.0))


def align_reference(
    w: Raster,
    t: Raster,
    min_matches: int = 50,
    ratio_threshold: float = 0.75,
    inlier_px: float = 2.0,
    max_iters: int = 2000,
    seed: int = 0,
    flow_levels: int = 3,
    flow_window: int = 15,
    flow_iters: int = 10,
) -> tuple[Raster, Raster]:
    """Warp the reference into the wide frame: homography, then dense flow.

    Returns (aligned, validity) where validity uses the mask convention
    (0 = usable, 255 = outside the reference coverage).
    """
    feats_w = detect_and_describe(w)
    feats_t = detect_and_describe(t)
    matches = match_descriptors(
        [d for _, d in feats_t], [d for _, d in feats_w], ratio_threshold
    )
    if len(matches) < max(min_matches, 4):
        raise AlignmentError(
            f"reference/wide pair: only {len(matches)} matches (need {min_matches})"
        )
    src = np.array([[feats_t[m.idx_a][0].x, feats_t[m.idx_a][0].y] for m in matches])
    dst = np.array([[feats_w[m.idx_b][0].x, feats_w[m.idx_b][0].y] for m in matches])
    h, _ = estimate_homography(
        src, dst, method="RANSAC", inlier_px=inlier_px, max_iters=max_iters, seed=seed
    )
    warped, coverage = warp_projective(t, h, w.width, w.height)
    covered = coverage.data[:, :, 0] == 0

    # Uncovered pixels were zeroed by the warp; fill them with the wide
    # frame before flow estimation so the artificial black seam cannot
    # drag spurious motion into the interior.
    composite = Raster(np.where(covered[:, :, None], warped.data, w.data))
    flow = compute_flow(w, composite, levels=flow_levels, window=flow_window, iters=flow_iters)
    gated_valid = flow.valid & covered
    flow = FlowField(
        u=np.where(gated_valid, flow.u, 0.0).astype(np.float32),
        v=np.where(gated_valid, flow.v, 0.0).astype(np.float32),
        valid=gated_valid,
    )
    refined = warp_with_flow(composite, flow)
    aligned = Raster(np.where(covered[:, :, None], refined.data, np.zeros_like(refined.data)))
    return aligned, coverage


def detail_transfer(
    w: Raster,
    t_aligned: Raster,
    c: ConfidenceMap,
    highpass_sigma: float = DEFAULT_HIGHPASS_SIGMA,
) -> Raster:
    """out = clamp(w + C * (t_aligned - blur(t_aligned))): gated unsharp detail.

    Pixels with zero confidence reproduce w bit-exactly.
    """
    if (w.height, w.width, w.channels) != (t_aligned.height, t_aligned.width, t_aligned.channels):
        raise ContractViolation("wide/reference dims must match")
    if (c.height, c.width) != (w.height, w.width):
        raise ContractViolation("confidence dims must match the wide frame")
    if highpass_sigma <= 0:
        raise ContractViolation(f"highpass_sigma must be > 0, got {highpass_sigma}")

    wf = w.data.astype(np.float64)
    if w.depth == "F32":
        wf = wf * 255.0
    tf = t_aligned.data.astype(np.float64)
    if t_aligned.depth == "F32":
        tf = tf * 255.0
    size = 2 * int(np.ceil(3.0 * highpass_sigma)) + 1
    taps = gaussian_kernel1d(size, highpass_sigma)
    blurred = np.stack(
        [convolve_separable(tf[:, :, ch], taps) for ch in range(t_aligned.channels)], axis=2
    )
    out = wf + c.c[:, :, None] * (tf - blurred)
    return Raster(np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8))


@dataclass
class FuseResult:
    fused: Raster
    confidence: ConfidenceMap
    validity: Raster  # 0 = reference-covered, 255 = wide passthrough


def fuse_pair(
    w: Raster,
    t: Raster,
    smooth_sigma: float = DEFAULT_SMOOTH_SIGMA,
    gain: float = DEFAULT_GAIN,
    highpass_sigma: float = DEFAULT_HIGHPASS_SIGMA,
    **align_kwargs,
) -> FuseResult:
    """Full fusion baseline: align, color-match, gate, transfer detail."""
    aligned, validity = align_reference(w, t, **align_kwargs)
    lut = build_intensity_lut(aligned, w, roi=validity)
    aligned = apply_lut(aligned, lut)
    conf = edge_confidence(w, smooth_sigma=smooth_sigma, gain=gain)
    covered = validity.data[:, :, 0] == 0
    gated = ConfidenceMap(np.where(covered, conf.c, 0.0))
    fused = detail_transfer(w, aligned, gated, highpass_sigma=highpass_sigma)
    return FuseResult(fused=fused, confidence=gated, validity=validity)


def confidence_to_raster(c: ConfidenceMap) -> Raster:
    """Render a confidence map as an 8-bit grayscale raster."""
    return Raster(np.rint(c.c * 255.0).astype(np.uint8)[:, :, np.newaxis])
