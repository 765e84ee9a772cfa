import math

import numpy as np
import pytest

from dualcam.imagekit import Raster, center_crop, gaussian_blur, resample_bicubic


def make_texture(rng: np.random.Generator, h: int, w: int, channels: int = 3) -> Raster:
    """Corner-rich smooth texture: coarse blobs + mid detail + fine grain."""
    def smooth_field(cell: int) -> np.ndarray:
        grid = rng.uniform(0.0, 1.0, size=(h // cell + 3, w // cell + 3))
        up = resample_bicubic(Raster.from_array(grid.astype(np.float32)), w, h)
        return up.data[:, :, 0].astype(np.float64)

    base = 0.55 * smooth_field(16) + 0.3 * smooth_field(4)
    noise = rng.uniform(0.0, 1.0, size=(h, w))
    fine = gaussian_blur(Raster.from_array(noise.astype(np.float32)), 5, 1.0)
    base = base + 0.15 * fine.data[:, :, 0].astype(np.float64)
    base = (base - base.min()) / max(base.max() - base.min(), 1e-12)
    planes = []
    for c in range(channels):
        tint = 0.9 + 0.1 * rng.uniform(-1.0, 1.0)
        shift = 0.05 * rng.uniform(0.0, 1.0)
        planes.append(np.clip(tint * base + shift, 0.0, 1.0))
    arr = np.stack(planes, axis=2)
    return Raster((10.0 + 235.0 * arr).round().astype(np.uint8))


def make_blob_field(
    rng: np.random.Generator, h: int, w: int, blob_every: int = 300
) -> Raster:
    """High-contrast random Gaussian blobs: dense, scale-spread features."""
    base = 0.5 * np.ones((h, w), dtype=np.float64)
    grid = rng.uniform(-1.0, 1.0, size=(h // 24 + 3, w // 24 + 3))
    up = resample_bicubic(
        Raster.from_array(((grid + 1) / 2).astype(np.float32)), w, h
    ).data[:, :, 0].astype(np.float64)
    base += 0.12 * (2.0 * up - 1.0)
    n = (h * w) // blob_every
    for _ in range(n):
        cx = rng.uniform(0, w)
        cy = rng.uniform(0, h)
        sigma = rng.uniform(2.0, 7.0)
        amp = rng.uniform(0.3, 0.5) * rng.choice([-1.0, 1.0])
        r = int(3.0 * sigma) + 1
        x0, x1 = max(int(cx) - r, 0), min(int(cx) + r + 1, w)
        y0, y1 = max(int(cy) - r, 0), min(int(cy) + r + 1, h)
        ys, xs = np.mgrid[y0:y1, x0:x1]
        base[y0:y1, x0:x1] += amp * np.exp(
            -((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma)
        )
    base = np.clip(base, 0.0, 1.0)
    arr = np.stack(
        [np.clip(base * (0.95 + 0.05 * c), 0.0, 1.0) for c in range(3)], axis=2
    )
    return Raster(np.rint(arr * 255.0).astype(np.uint8))


AFFINE_CURVE_GAIN = 0.85
AFFINE_CURVE_OFFSET = 20.0


def affine_color_curve(img: Raster) -> Raster:
    """Known monotone per-channel tone curve: v -> round(0.85 v + 20)."""
    table = np.rint(
        np.clip(AFFINE_CURVE_GAIN * np.arange(256, dtype=np.float64) + AFFINE_CURVE_OFFSET, 0, 255)
    ).astype(np.uint8)
    return Raster(table[img.data])


def affine_curve_inverse(k: np.ndarray | float):
    return (np.asarray(k, dtype=np.float64) - AFFINE_CURVE_OFFSET) / AFFINE_CURVE_GAIN


def synth_capture_triple(
    rng: np.random.Generator,
    size: int,
    zoom: float = 2.2,
    rot_deg: float = 0.0,
    blob_every: int = 120,
):
    """Capture triple with known geometry and color ground truth.

    The supervision frame applies a known homography of the wide frame
    followed by a known monotone color curve; the tele frame duplicates
    the wide scene at a deeper zoom. With rot_deg == 0 the homography is
    the centered integer-rect crop-and-upsample (exactly recoverable by
    rectangle-based alignment); a nonzero rotation exercises the flow
    refinement with an irreducible rectangle approximation.

    Returns (wide, tele, gt, h_gt_to_wide).
    """
    from dualcam.registration import Homography
    from dualcam.registration.homography import warp_projective

    w2 = make_blob_field(rng, size, size, blob_every=blob_every)

    if rot_deg == 0.0:
        crop = round(size / zoom)
        x0 = (size - crop) // 2
        gt_geo = resample_bicubic(center_crop(w2, crop, crop), size, size)
        a = crop / size
        b = x0 + 0.5 * a - 0.5
        h_gt_to_wide = Homography.from_matrix(
            np.array([[a, 0.0, b], [0.0, a, b], [0.0, 0.0, 1.0]])
        )
    else:
        s = 1.0 / zoom
        theta = math.radians(rot_deg)
        c = (size - 1) / 2.0
        rot = np.array(
            [
                [s * math.cos(theta), -s * math.sin(theta)],
                [s * math.sin(theta), s * math.cos(theta)],
            ]
        )
        t = np.array([c, c]) - rot @ np.array([c, c])
        h_gt_to_wide = Homography.from_matrix(
            np.array(
                [
                    [rot[0, 0], rot[0, 1], t[0]],
                    [rot[1, 0], rot[1, 1], t[1]],
                    [0.0, 0.0, 1.0],
                ]
            )
        )
        gt_geo, coverage = warp_projective(w2, h_gt_to_wide.inverse(), size, size)
        assert np.all(coverage.data == 0), "synthetic zoom must stay inside the wide frame"
    gt = affine_color_curve(gt_geo)

    tele_crop = round(size / 2.7)
    t2 = resample_bicubic(center_crop(w2, tele_crop, tele_crop), size, size)
    return w2, t2, gt, h_gt_to_wide


def write_capture(dir_path, wide: Raster, tele: Raster, gt: Raster) -> None:
    from dualcam.imagekit import save_png

    dir_path.mkdir(parents=True, exist_ok=True)
    save_png(wide, dir_path / "wide.png")
    save_png(tele, dir_path / "tele.png")
    save_png(gt, dir_path / "gt.png")


def psnr_simple(a: np.ndarray, b: np.ndarray) -> float:
    """Plain reference PSNR on uint8-scale arrays, for fixture checks."""
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = np.mean(diff * diff)
    if mse == 0:
        return 99.0
    return 10.0 * np.log10(255.0 ** 2 / mse)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
