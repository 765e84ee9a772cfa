"""Projective transforms: normalized DLT estimation, RANSAC, and warping."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, DegenerateGeometryError, InsufficientDataError
from ..imagekit import Raster, sample_bicubic

RANSAC_CONFIDENCE = 0.999
MIN_ABS_DET = 1e-12


@dataclass(frozen=True)
class Homography:
    """3x3 projective map, normalized so h[2][2] == 1."""

    h: np.ndarray

    def __post_init__(self):
        m = self.h
        if m.shape != (3, 3):
            raise ContractViolation(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ContractViolation("homography has non-finite entries")
        if m[2, 2] != 1.0:
            raise ContractViolation("homography must be normalized to h[2][2] == 1")
        if abs(np.linalg.det(m)) <= MIN_ABS_DET:
            raise DegenerateGeometryError("homography is singular")

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Homography":
        m = np.asarray(m, dtype=np.float64)
        if m[2, 2] == 0.0 or not np.isfinite(m[2, 2]):
            raise DegenerateGeometryError("cannot normalize homography: h[2][2] == 0")
        return Homography(m / m[2, 2])

    @staticmethod
    def identity() -> "Homography":
        return Homography(np.eye(3))

    def apply(self, pts: np.ndarray) -> np.ndarray:
        """Map (n, 2) points through the transform."""
        pts = np.asarray(pts, dtype=np.float64)
        ones = np.ones((pts.shape[0], 1))
        proj = np.hstack([pts, ones]) @ self.h.T
        return proj[:, :2] / proj[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography.from_matrix(np.linalg.inv(self.h))

    def compose(self, other: "Homography") -> "Homography":
        """self after other: (self @ other)(x) == self(other(x))."""
        return Homography.from_matrix(self.h @ other.h)

    def to_rows(self) -> list[list[float]]:
        return self.h.tolist()


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Isotropic scaling: centroid to origin, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    dist = np.sqrt(((pts - centroid) ** 2).sum(axis=1)).mean()
    scale = math.sqrt(2.0) / dist if dist > 0 else 1.0
    return np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )


def dlt_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform with Hartley normalization. Returns raw 3x3."""
    n = src.shape[0]
    if n < 4:
        raise InsufficientDataError(f"need >= 4 correspondences, got {n}")
    t_src = _normalizing_transform(src)
    t_dst = _normalizing_transform(dst)
    s = (np.hstack([src, np.ones((n, 1))]) @ t_src.T)[:, :2]
    d = (np.hstack([dst, np.ones((n, 1))]) @ t_dst.T)[:, :2]

    a = np.zeros((2 * n, 9))
    a[0::2, 0] = -s[:, 0]
    a[0::2, 1] = -s[:, 1]
    a[0::2, 2] = -1.0
    a[0::2, 6] = s[:, 0] * d[:, 0]
    a[0::2, 7] = s[:, 1] * d[:, 0]
    a[0::2, 8] = d[:, 0]
    a[1::2, 3] = -s[:, 0]
    a[1::2, 4] = -s[:, 1]
    a[1::2, 5] = -1.0
    a[1::2, 6] = s[:, 0] * d[:, 1]
    a[1::2, 7] = s[:, 1] * d[:, 1]
    a[1::2, 8] = d[:, 1]

    _, _, vt = np.linalg.svd(a)
    h_norm = vt[-1].reshape(3, 3)
    return np.linalg.inv(t_dst) @ h_norm @ t_src


def _has_collinear_triple(pts: np.ndarray) -> bool:
    n = pts.shape[0]
    span = max(pts.max() - pts.min(), 1.0)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                area = abs(
                    (pts[j, 0] - pts[i, 0]) * (pts[k, 1] - pts[i, 1])
                    - (pts[k, 0] - pts[i, 0]) * (pts[j, 1] - pts[i, 1])
                )
                if area < 1e-9 * span * span:
                    return True
    return False


def _symmetric_errors(h: Homography, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Per-point max of forward and backward transfer distance (pixels)."""
    fwd = np.sqrt(((h.apply(src) - dst) ** 2).sum(axis=1))
    bwd = np.sqrt(((h.inverse().apply(dst) - src) ** 2).sum(axis=1))
    return np.maximum(fwd, bwd)


def estimate_homography(
    src: np.ndarray,
    dst: np.ndarray,
    method: str = "RANSAC",
    inlier_px: float = 2.0,
    max_iters: int = 2000,
    seed: int = 0,
) -> tuple[Homography, np.ndarray]:
    """Estimate the src -> dst homography; returns (H, inlier mask).

    RANSAC draws seeded minimal samples, rejects collinear ones, scores by
    symmetric transfer error, then refits with normalized DLT over the
    consensus set (two rounds).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ContractViolation("correspondences must be matching (n, 2) arrays")
    n = src.shape[0]
    if n < 4:
        raise InsufficientDataError(f"need >= 4 correspondences, got {n}")

    if method == "DLT_EXACT":
        h = Homography.from_matrix(dlt_homography(src, dst))
        return h, np.ones(n, dtype=bool)
    if method != "RANSAC":
        raise ContractViolation(f"unknown method {method!r}")

    rng = np.random.default_rng(seed)
    best_mask: np.ndarray | None = None
    best_count = 0
    required = max_iters
    it = 0
    while it < min(max_iters, required):
        it += 1
        sample = rng.choice(n, 4, replace=False)
        if _has_collinear_triple(src[sample]) or _has_collinear_triple(dst[sample]):
            continue
        try:
            cand = Homography.from_matrix(dlt_homography(src[sample], dst[sample]))
        except (DegenerateGeometryError, np.linalg.LinAlgError):
            continue
        mask = _symmetric_errors(cand, src, dst) < inlier_px
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            ratio = count / n
            if 0.0 < ratio < 1.0:
                required = math.log(1.0 - RANSAC_CONFIDENCE) / math.log(1.0 - ratio**4)
            elif ratio >= 1.0:
                required = 0

    if best_mask is None or best_count < 4:
        raise DegenerateGeometryError(
            f"RANSAC found no valid model in {max_iters} iterations"
        )

    # Refit over consensus, twice, recomputing the mask between rounds.
    mask = best_mask
    h = Homography.from_matrix(dlt_homography(src[mask], dst[mask]))
    for _ in range(2):
        mask = _symmetric_errors(h, src, dst) < inlier_px
        if mask.sum() < 4:
            break
        h = Homography.from_matrix(dlt_homography(src[mask], dst[mask]))
    mask = _symmetric_errors(h, src, dst) < inlier_px
    return h, mask


def warp_projective(
    img: Raster, h: Homography, out_w: int, out_h: int
) -> tuple[Raster, Raster]:
    """Inverse-mapping bicubic warp of img by h onto an out_w x out_h canvas.

    Returns (warped, coverage). Coverage is a 1-channel U8 raster using the
    toolkit mask convention: 0 where every bicubic tap fell inside the
    source (valid), 255 where the footprint left the source (invalid);
    uncovered pixels are set to 0 in the warped image.
    """
    hinv = h.inverse().h
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    w = hinv[2, 0] * xs + hinv[2, 1] * ys + hinv[2, 2]
    safe_w = np.where(np.abs(w) < 1e-12, 1.0, w)
    sx = (hinv[0, 0] * xs + hinv[0, 1] * ys + hinv[0, 2]) / safe_w
    sy = (hinv[1, 0] * xs + hinv[1, 1] * ys + hinv[1, 2]) / safe_w

    bx = np.floor(sx)
    by = np.floor(sy)
    # At exact-integer coordinates the cubic weights collapse to the center
    # tap, so the sampling footprint is that single pixel; otherwise all
    # four taps along the axis carry weight and must lie inside.
    tx = sx - bx
    ty = sy - by
    x_ok = np.where(tx == 0.0, (bx >= 0) & (bx <= img.width - 1), (bx >= 1) & (bx <= img.width - 3))
    y_ok = np.where(ty == 0.0, (by >= 0) & (by <= img.height - 1), (by >= 1) & (by <= img.height - 3))
    covered = (np.abs(w) >= 1e-12) & x_ok & y_ok

    data = img.data.astype(np.float64)
    out = np.zeros((out_h, out_w, img.channels), dtype=np.float64)
    for c in range(img.channels):
        out[:, :, c] = sample_bicubic(data[:, :, c], sx, sy)
    out[~covered] = 0.0

    if img.depth == "U8":
        warped = Raster(np.rint(np.clip(out, 0.0, 255.0)).astype(np.uint8))
    else:
        warped = Raster(np.clip(out, 0.0, 1.0).astype(np.float32))
    coverage = Raster(np.where(covered, 0, 255).astype(np.uint8)[:, :, np.newaxis])
    return warped, coverage
