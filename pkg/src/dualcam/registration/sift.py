"""Scale-space feature detection, description, and ratio-test matching.

Difference-of-Gaussian extrema with subpixel refinement and edge-response
rejection, described by 4x4x8 gradient-orientation histograms (trilinearly
binned, L2-normalized, clipped at 0.2, renormalized). Parameters are pinned
for determinism; there is no randomness anywhere in this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from ..imagekit import Raster, convolve_separable, gaussian_kernel1d, luma64

N_OCTAVES = 4
LEVELS_PER_OCTAVE = 3
SIGMA0 = 1.6
ASSUMED_BLUR = 0.5
CONTRAST_THRESHOLD = 0.03
EDGE_RATIO = 10.0
BORDER = 5
ORI_BINS = 36
ORI_SIGMA_FACTOR = 1.5
ORI_PEAK_RATIO = 0.8
DESC_GRID = 4
DESC_ORI_BINS = 8
DESC_SCALE_FACTOR = 3.0
DESC_CLIP = 0.2
RATIO_THRESHOLD_DEFAULT = 0.75


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float  # sigma in original-image units
    orientation: float  # radians in [0, 2*pi)
    response: float


@dataclass(frozen=True)
class Match:
    idx_a: int
    idx_b: int
    distance: float
    ratio: float


def _blur(plane: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return plane.copy()
    radius = max(1, int(math.ceil(4.0 * sigma)))
    return convolve_separable(plane, gaussian_kernel1d(2 * radius + 1, sigma))


class _Pyramid:
    """Gaussian + DoG scale space with lazily cached gradients."""

    def __init__(self, base: np.ndarray):
        self.gaussians: list[list[np.ndarray]] = []
        self.dogs: list[list[np.ndarray]] = []
        self._grad_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

        k = 2.0 ** (1.0 / LEVELS_PER_OCTAVE)
        sigmas = [SIGMA0 * k**i for i in range(LEVELS_PER_OCTAVE + 3)]
        first = _blur(base, math.sqrt(max(SIGMA0**2 - ASSUMED_BLUR**2, 0.01)))
        for octave in range(N_OCTAVES):
            if octave > 0:
                prev = self.gaussians[octave - 1][LEVELS_PER_OCTAVE]
                if prev.shape[0] < 2 * BORDER + 3 or prev.shape[1] < 2 * BORDER + 3:
                    break
                first = prev[::2, ::2].copy()
            levels = [first]
            for i in range(1, len(sigmas)):
                inc = math.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2)
                levels.append(_blur(levels[-1], inc))
            self.gaussians.append(levels)
            self.dogs.append([levels[i + 1] - levels[i] for i in range(len(levels) - 1)])

    def gradients(self, octave: int, level: int) -> tuple[np.ndarray, np.ndarray]:
        """(magnitude, angle) of the Gaussian image, central differences."""
        key = (octave, level)
        if key not in self._grad_cache:
            g = self.gaussians[octave][level]
            dx = np.zeros_like(g)
            dy = np.zeros_like(g)
            dx[:, 1:-1] = 0.5 * (g[:, 2:] - g[:, :-2])
            dy[1:-1, :] = 0.5 * (g[2:, :] - g[:-2, :])
            self._grad_cache[key] = (np.hypot(dx, dy), np.arctan2(dy, dx))
        return self._grad_cache[key]


def _local_extrema(d_prev: np.ndarray, d_cur: np.ndarray, d_next: np.ndarray) -> np.ndarray:
    """Strict 26-neighbor extrema mask for interior pixels (same shape)."""
    c = d_cur[1:-1, 1:-1]
    gt = np.ones(c.shape, dtype=bool)
    lt = np.ones(c.shape, dtype=bool)
    for layer in (d_prev, d_cur, d_next):
        for dy in (0, 1, 2):
            for dx in (0, 1, 2):
                if layer is d_cur and dy == 1 and dx == 1:
                    continue
                n = layer[dy : dy + c.shape[0], dx : dx + c.shape[1]]
                gt &= c > n
                lt &= c < n
    out = np.zeros(d_cur.shape, dtype=bool)
    out[1:-1, 1:-1] = gt | lt
    return out


def _refine(
    dogs: list[np.ndarray], level: int, y: int, x: int
) -> tuple[int, int, int, np.ndarray, float] | None:
    """Quadratic subpixel refinement; returns (l, y, x, offset, contrast)."""
    h, w = dogs[0].shape
    for _ in range(5):
        dp, dc, dn = dogs[level - 1], dogs[level], dogs[level + 1]
        g = np.array(
            [
                0.5 * (dc[y, x + 1] - dc[y, x - 1]),
                0.5 * (dc[y + 1, x] - dc[y - 1, x]),
                0.5 * (dn[y, x] - dp[y, x]),
            ]
        )
        dxx = dc[y, x + 1] - 2 * dc[y, x] + dc[y, x - 1]
        dyy = dc[y + 1, x] - 2 * dc[y, x] + dc[y - 1, x]
        dss = dn[y, x] - 2 * dc[y, x] + dp[y, x]
        dxy = 0.25 * (dc[y + 1, x + 1] - dc[y + 1, x - 1] - dc[y - 1, x + 1] + dc[y - 1, x - 1])
        dxs = 0.25 * (dn[y, x + 1] - dn[y, x - 1] - dp[y, x + 1] + dp[y, x - 1])
        dys = 0.25 * (dn[y + 1, x] - dn[y - 1, x] - dp[y + 1, x] + dp[y - 1, x])
        hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
        try:
            offset = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) < 0.5):
            contrast = dc[y, x] + 0.5 * float(g @ offset)
            return level, y, x, offset, contrast
        x += int(round(float(offset[0])))
        y += int(round(float(offset[1])))
        level += int(round(float(offset[2])))
        if (
            level < 1
            or level > len(dogs) - 2
            or x < BORDER
            or x >= w - BORDER
            or y < BORDER
            or y >= h - BORDER
        ):
            return None
    return None


def _edge_like(dc: np.ndarray, y: int, x: int) -> bool:
    dxx = dc[y, x + 1] - 2 * dc[y, x] + dc[y, x - 1]
    dyy = dc[y + 1, x] - 2 * dc[y, x] + dc[y - 1, x]
    dxy = 0.25 * (dc[y + 1, x + 1] - dc[y + 1, x - 1] - dc[y - 1, x + 1] + dc[y - 1, x - 1])
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0:
        return True
    return tr * tr * EDGE_RATIO >= (EDGE_RATIO + 1.0) ** 2 * det


_ORI_SMOOTH = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def _orientations(
    pyr: _Pyramid, octave: int, level: int, x: float, y: float, sigma_oct: float
) -> list[float]:
    mag, ang = pyr.gradients(octave, level)
    h, w = mag.shape
    sigma = ORI_SIGMA_FACTOR * sigma_oct
    radius = int(round(3.0 * sigma))
    cx, cy = int(round(x)), int(round(y))
    x0, x1 = max(cx - radius, 1), min(cx + radius, w - 2)
    y0, y1 = max(cy - radius, 1), min(cy + radius, h - 2)
    if x1 <= x0 or y1 <= y0:
        return []
    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    weight = np.exp(-((xs - x) ** 2 + (ys - y) ** 2) / (2.0 * sigma * sigma))
    m = mag[y0 : y1 + 1, x0 : x1 + 1] * weight
    a = ang[y0 : y1 + 1, x0 : x1 + 1] % (2.0 * math.pi)
    bins = np.floor(a / (2.0 * math.pi) * ORI_BINS).astype(np.int64) % ORI_BINS
    hist = np.bincount(bins.reshape(-1), weights=m.reshape(-1), minlength=ORI_BINS)
    for _ in range(2):
        hist = sum(
            _ORI_SMOOTH[k] * np.roll(hist, k - 2) for k in range(5)
        )
    peak = hist.max()
    if peak <= 0:
        return []
    out = []
    for i in range(ORI_BINS):
        left = hist[(i - 1) % ORI_BINS]
        right = hist[(i + 1) % ORI_BINS]
        if hist[i] >= ORI_PEAK_RATIO * peak and hist[i] > left and hist[i] > right:
            denom = left - 2.0 * hist[i] + right
            delta = 0.5 * (left - right) / denom if denom != 0 else 0.0
            out.append(((i + delta) % ORI_BINS) * (2.0 * math.pi / ORI_BINS))
    return out


def _descriptor(
    pyr: _Pyramid, octave: int, level: int, x: float, y: float, sigma_oct: float, theta: float
) -> np.ndarray | None:
    mag, ang = pyr.gradients(octave, level)
    h, w = mag.shape
    d = DESC_GRID
    hist_width = DESC_SCALE_FACTOR * sigma_oct
    radius = int(round(hist_width * (d + 1) * math.sqrt(2.0) / 2.0))
    radius = min(radius, int(math.hypot(h, w)))
    cx, cy = int(round(x)), int(round(y))
    x0, x1 = max(cx - radius, 1), min(cx + radius, w - 2)
    y0, y1 = max(cy - radius, 1), min(cy + radius, h - 2)
    if x1 <= x0 or y1 <= y0:
        return None

    ys, xs = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dx = (xs - x).astype(np.float64)
    dy = (ys - y).astype(np.float64)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # Rotate into the keypoint frame, in subregion units.
    c_rot = (dx * cos_t + dy * sin_t) / hist_width
    r_rot = (-dx * sin_t + dy * cos_t) / hist_width
    rbin = r_rot + d / 2.0 - 0.5
    cbin = c_rot + d / 2.0 - 0.5

    inside = (rbin > -1.0) & (rbin < d) & (cbin > -1.0) & (cbin < d)
    if not inside.any():
        return None
    rbin = rbin[inside]
    cbin = cbin[inside]
    weight = np.exp(-(r_rot[inside] ** 2 + c_rot[inside] ** 2) / (2.0 * (0.5 * d) ** 2))
    m = mag[y0 : y1 + 1, x0 : x1 + 1][inside] * weight
    obin = ((ang[y0 : y1 + 1, x0 : x1 + 1][inside] - theta) % (2.0 * math.pi)) / (
        2.0 * math.pi
    ) * DESC_ORI_BINS

    r0 = np.floor(rbin).astype(np.int64)
    c0 = np.floor(cbin).astype(np.int64)
    o0 = np.floor(obin).astype(np.int64)
    rf = rbin - r0
    cf = cbin - c0
    of = obin - o0

    acc = np.zeros((d + 2, d + 2, DESC_ORI_BINS), dtype=np.float64)
    for dr in (0, 1):
        wr = m * (rf if dr else (1.0 - rf))
        for dcol in (0, 1):
            wc = wr * (cf if dcol else (1.0 - cf))
            for do in (0, 1):
                wo = wc * (of if do else (1.0 - of))
                np.add.at(
                    acc,
                    (r0 + dr + 1, c0 + dcol + 1, (o0 + do) % DESC_ORI_BINS),
                    wo,
                )
    vec = acc[1 : d + 1, 1 : d + 1, :].reshape(-1)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    vec = np.minimum(vec / norm, DESC_CLIP)
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        return None
    return vec / norm


def detect_and_describe(img: Raster) -> list[tuple[Keypoint, np.ndarray]]:
    """Scale-space keypoints with unit-norm 128-d descriptors.

    Images smaller than the working footprint simply yield an empty list.
    """
    base = luma64(img)
    if base.shape[0] < 2 * BORDER + 3 or base.shape[1] < 2 * BORDER + 3:
        return []
    pyr = _Pyramid(base)

    pre_threshold = 0.5 * CONTRAST_THRESHOLD
    results: list[tuple[Keypoint, np.ndarray]] = []
    seen: set[tuple[int, int, int, int]] = set()
    for octave, dogs in enumerate(pyr.dogs):
        h, w = dogs[0].shape
        for level in range(1, len(dogs) - 1):
            mask = _local_extrema(dogs[level - 1], dogs[level], dogs[level + 1])
            mask &= np.abs(dogs[level]) > pre_threshold
            mask[:BORDER, :] = mask[-BORDER:, :] = False
            mask[:, :BORDER] = mask[:, -BORDER:] = False
            for y, x in np.argwhere(mask):
                refined = _refine(dogs, level, int(y), int(x), )
                if refined is None:
                    continue
                lvl, ry, rx, offset, contrast = refined
                if abs(contrast) < CONTRAST_THRESHOLD:
                    continue
                if _edge_like(dogs[lvl], ry, rx):
                    continue
                x_oct = rx + float(offset[0])
                y_oct = ry + float(offset[1])
                s_oct = SIGMA0 * 2.0 ** ((lvl + float(offset[2])) / LEVELS_PER_OCTAVE)
                key = (
                    octave,
                    int(round(x_oct * 2.0)),
                    int(round(y_oct * 2.0)),
                    int(round(s_oct * 4.0)),
                )
                if key in seen:
                    continue
                seen.add(key)
                for theta in _orientations(pyr, octave, lvl, x_oct, y_oct, s_oct):
                    desc = _descriptor(pyr, octave, lvl, x_oct, y_oct, s_oct, theta)
                    if desc is None:
                        continue
                    kp = Keypoint(
                        x=x_oct * 2.0**octave,
                        y=y_oct * 2.0**octave,
                        scale=s_oct * 2.0**octave,
                        orientation=theta,
                        response=abs(contrast),
                    )
                    results.append((kp, desc))
    return results


def match_descriptors(
    desc_a: list[np.ndarray] | np.ndarray,
    desc_b: list[np.ndarray] | np.ndarray,
    ratio_threshold: float = RATIO_THRESHOLD_DEFAULT,
) -> list[Match]:
    """Mutual-best ratio-test matching by L2 distance.

    For each query the nearest and second-nearest candidates are found;
    the match survives if d1/d2 < ratio_threshold and the candidate's own
    best query is the same pair. Ties break toward the lowest index.
    """
    if not (0.0 < ratio_threshold < 1.0):
        raise ContractViolation(f"ratio_threshold must be in (0, 1), got {ratio_threshold}")
    da = np.asarray(desc_a, dtype=np.float64)
    db = np.asarray(desc_b, dtype=np.float64)
    if da.size == 0 or db.shape[0] < 2:
        return []

    d2 = (
        (da * da).sum(axis=1)[:, None]
        + (db * db).sum(axis=1)[None, :]
        - 2.0 * (da @ db.T)
    )
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)

    nearest = np.argmin(dist, axis=1)
    rows = np.arange(da.shape[0])
    d1 = dist[rows, nearest]
    masked = dist.copy()
    masked[rows, nearest] = np.inf
    second = masked.min(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratios = np.where(second > 0.0, d1 / second, 1.0)

    best_for_b = np.argmin(dist, axis=0)
    out = []
    for i in rows:
        j = int(nearest[i])
        if ratios[i] < ratio_threshold and int(best_for_b[j]) == i:
            out.append(Match(idx_a=int(i), idx_b=j, distance=float(d1[i]), ratio=float(ratios[i])))
    return out
