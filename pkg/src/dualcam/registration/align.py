"""Scale alignment of a capture triple: wide frame, reference tele, ground truth.

Features are matched between the wide frame and the ground-truth tele frame,
a projective transform is estimated, and the overlap rectangle of the tele
FOV inside the wide frame is recovered. The wide overlap is upsampled to the
ground-truth resolution (preserving ground-truth detail); the identical crop
and enlargement are duplicated onto the input tele frame so the wide/tele
FOV ratio survives calibration unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..errors import AlignmentError
from ..imagekit import Raster, resample_bicubic
from .homography import Homography, estimate_homography
from .sift import detect_and_describe, match_descriptors


@dataclass(frozen=True)
class Rect:
    """Integer pixel rectangle, inclusive origin, exclusive end."""

    x: int
    y: int
    w: int
    h: int

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass
class ScaleAlignResult:
    w_cal: Raster
    gt_cal: Raster
    t_cal: Raster
    h_gt_to_wide: Homography
    overlap_wide: Rect
    overlap_gt: Rect
    match_count: int
    inlier_count: int
    scale_x: float
    scale_y: float

    def audit_json(self) -> str:
        return json.dumps(
            {
                "homography": self.h_gt_to_wide.to_rows(),
                "overlap_wide": self.overlap_wide.as_tuple(),
                "overlap_gt": self.overlap_gt.as_tuple(),
                "match_count": self.match_count,
                "inlier_count": self.inlier_count,
                "scale_x": self.scale_x,
                "scale_y": self.scale_y,
            }
        )


def overlap_transform(rect: Rect, out_w: int, out_h: int) -> np.ndarray:
    """Affine 3x3 mapping source-rect pixel coords to output pixel coords."""
    sx = out_w / rect.w
    sy = out_h / rect.h
    return np.array(
        [
            [sx, 0.0, -rect.x * sx + 0.5 * sx - 0.5],
            [0.0, sy, -rect.y * sy + 0.5 * sy - 0.5],
            [0.0, 0.0, 1.0],
        ]
    )


def _crop(img: Raster, rect: Rect) -> Raster:
    return Raster(
        np.ascontiguousarray(img.data[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w])
    )


def _interior_bounds_f(corners: np.ndarray) -> tuple[float, float, float, float]:
    """Float axis-aligned interior of a TL, TR, BR, BL quad: (x0, y0, x1, y1)."""
    x0 = max(corners[0, 0], corners[3, 0])
    x1 = min(corners[1, 0], corners[2, 0])
    y0 = max(corners[0, 1], corners[1, 1])
    y1 = min(corners[2, 1], corners[3, 1])
    return x0, y0, x1, y1


def _round_rect(x0: float, y0: float, x1: float, y1: float, bound_w: int, bound_h: int) -> Rect | None:
    """Round rect edges to nearest pixel centers and clip to image bounds.

    Nearest rounding keeps the recovered rectangle stable under subpixel
    estimation noise, where a ceil/floor rule would flip on any epsilon.
    """
    xi0 = max(int(round(x0)), 0)
    yi0 = max(int(round(y0)), 0)
    xi1 = min(int(round(x1)), bound_w - 1)
    yi1 = min(int(round(y1)), bound_h - 1)
    if xi1 < xi0 or yi1 < yi0:
        return None
    return Rect(x=xi0, y=yi0, w=xi1 - xi0 + 1, h=yi1 - yi0 + 1)


def _corners(x0: float, y0: float, x1: float, y1: float) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=np.float64)


def scale_align(
    w2: Raster,
    t1: Raster,
    t2: Raster,
    min_matches: int = 50,
    ratio_threshold: float = 0.75,
    inlier_px: float = 2.0,
    max_iters: int = 2000,
    seed: int = 0,
    min_overlap_px: int = 32,
    gt_frame: str = "tele",
) -> ScaleAlignResult:
    """Recover the tele-in-wide overlap and produce the calibrated triple.

    gt_frame="tele" (default) upsamples the wide overlap to ground-truth
    size, keeping ground-truth detail intact; gt_frame="wide" instead
    downsamples the ground truth onto the wide overlap grid.
    """
    if gt_frame not in ("tele", "wide"):
        raise AlignmentError(f"unknown gt_frame {gt_frame!r}")

    feats_w = detect_and_describe(w2)
    feats_gt = detect_and_describe(t1)
    matches = match_descriptors(
        [d for _, d in feats_gt], [d for _, d in feats_w], ratio_threshold
    )
    if len(matches) < max(min_matches, 4):
        raise AlignmentError(
            f"wide/gt pair: only {len(matches)} matches (need {min_matches})"
        )

    src = np.array([[feats_gt[m.idx_a][0].x, feats_gt[m.idx_a][0].y] for m in matches])
    dst = np.array([[feats_w[m.idx_b][0].x, feats_w[m.idx_b][0].y] for m in matches])
    h, inliers = estimate_homography(
        src, dst, method="RANSAC", inlier_px=inlier_px, max_iters=max_iters, seed=seed
    )

    # Overlap geometry, anchored on the ground-truth frame to avoid double
    # rounding: find the float interior of the projected gt quad inside the
    # wide bounds, carry it back to the gt frame, round once there, then
    # derive the wide rect from the final gt rect.
    quad_w = h.apply(_corners(0.0, 0.0, t1.width - 1.0, t1.height - 1.0))
    x0, y0, x1, y1 = _interior_bounds_f(quad_w)
    x0, y0 = max(x0, 0.0), max(y0, 0.0)
    x1, y1 = min(x1, w2.width - 1.0), min(y1, w2.height - 1.0)
    if x1 <= x0 or y1 <= y0:
        raise AlignmentError("projected overlap lies outside the wide frame")

    gx0, gy0, gx1, gy1 = _interior_bounds_f(h.inverse().apply(_corners(x0, y0, x1, y1)))
    rect_gt = _round_rect(gx0, gy0, gx1, gy1, t1.width, t1.height)
    if rect_gt is None or rect_gt.w < min_overlap_px or rect_gt.h < min_overlap_px:
        raise AlignmentError("ground-truth side of the overlap is too small")

    wx0, wy0, wx1, wy1 = _interior_bounds_f(
        h.apply(
            _corners(
                rect_gt.x, rect_gt.y, rect_gt.x + rect_gt.w - 1.0, rect_gt.y + rect_gt.h - 1.0
            )
        )
    )
    rect_w = _round_rect(wx0, wy0, wx1, wy1, w2.width, w2.height)
    if rect_w is None or rect_w.w < min_overlap_px or rect_w.h < min_overlap_px:
        raise AlignmentError("overlap region smaller than the configured minimum")

    if gt_frame == "tele":
        out_w, out_h = rect_gt.w, rect_gt.h
        w_cal = resample_bicubic(_crop(w2, rect_w), out_w, out_h)
        t_cal = resample_bicubic(_crop(t2, rect_w), out_w, out_h)
        gt_cal = _crop(t1, rect_gt)
    else:
        out_w, out_h = rect_w.w, rect_w.h
        w_cal = _crop(w2, rect_w)
        t_cal = _crop(t2, rect_w)
        gt_cal = resample_bicubic(_crop(t1, rect_gt), out_w, out_h)

    return ScaleAlignResult(
        w_cal=w_cal,
        gt_cal=gt_cal,
        t_cal=t_cal,
        h_gt_to_wide=h,
        overlap_wide=rect_w,
        overlap_gt=rect_gt,
        match_count=len(matches),
        inlier_count=int(inliers.sum()),
        scale_x=out_w / rect_w.w if gt_frame == "tele" else rect_gt.w / rect_w.w,
        scale_y=out_h / rect_w.h if gt_frame == "tele" else rect_gt.h / rect_w.h,
    )
