"""Sparse feature registration and projective geometry."""

from .align import Rect, ScaleAlignResult, overlap_transform, scale_align
from .homography import Homography, dlt_homography, estimate_homography, warp_projective
from .sift import Keypoint, Match, detect_and_describe, match_descriptors

__all__ = [
    "Homography",
    "Keypoint",
    "Match",
    "Rect",
    "ScaleAlignResult",
    "detect_and_describe",
    "dlt_homography",
    "estimate_homography",
    "match_descriptors",
    "overlap_transform",
    "scale_align",
    "warp_projective",
]
