"""End-to-end dataset operations: ingest, calibrate, degrade, evaluate, split."""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..colormap import apply_lut, build_apply_lut3d, build_intensity_lut
from ..errors import AlignmentError, ContractViolation, NoStatisticsError
from ..flowalign import compute_flow, residual_map, warp_with_flow
from ..imagekit import Raster, center_crop, load_png, resample_bicubic, save_png
from ..quality import psnr, ssim
from ..registration import scale_align
from .config import PipelineConfig
from .manifest import Manifest, ManifestEntry, entry_id_for_files
from ..registration.align import ScaleAlignResult


class Workspace:
    """Directory layout for one dataset build."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    @property
    def manifest_path(self) -> Path:
        return self.root / "manifest.jsonl"

    def load_manifest(self) -> Manifest:
        return Manifest(self.manifest_path)

    def calibrated_dir(self, entry_id: str) -> Path:
        return self.root / "calibrated" / entry_id

    def mask_path(self, entry_id: str) -> Path:
        return self.root / "masks" / f"{entry_id}.png"

    def annotation_path(self, entry_id: str) -> Path:
        return self.root / "annotations" / f"{entry_id}.json"

    def residual_cache_path(self, entry_id: str) -> Path:
        return self.root / "cache" / f"{entry_id}_residual.png"

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.root / p

    def relativize(self, path: Path) -> str:
        try:
            return str(path.resolve().relative_to(self.root.resolve()))
        except ValueError:
            return str(path.resolve())


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

CAPTURE_FILES = ("wide.png", "tele.png", "gt.png")


def ingest(session_dir: str | Path, ws: Workspace) -> tuple[list[ManifestEntry], list[str]]:
    """Register capture triples (wide.png, tele.png, gt.png per subfolder).

    Idempotent: ids are content hashes, so re-ingesting the same captures
    never duplicates entries. Returns (new entries, diagnostics).
    """
    session_dir = Path(session_dir)
    manifest = ws.load_manifest()
    new_entries: list[ManifestEntry] = []
    diagnostics: list[str] = []
    if not session_dir.is_dir():
        return [], [f"{session_dir}: not a directory"]

    for capture in sorted(p for p in session_dir.iterdir() if p.is_dir()):
        paths = [capture / name for name in CAPTURE_FILES]
        missing = [p.name for p in paths if not p.exists()]
        if missing:
            diagnostics.append(f"{capture.name}: missing {', '.join(missing)}; skipped")
            continue
        entry_id = entry_id_for_files(*paths)
        if entry_id in manifest:
            diagnostics.append(f"{capture.name}: already ingested as {entry_id}")
            continue
        entry = ManifestEntry(
            id=entry_id,
            wide=ws.relativize(paths[0]),
            tele=ws.relativize(paths[1]),
            gt_raw=ws.relativize(paths[2]),
        )
        manifest.upsert(entry)
        new_entries.append(entry)
    return new_entries, diagnostics


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def occlusion_score(w_cal: Raster, gt_cal: Raster) -> float:
    """99th percentile of the blurred luma residual: the parallax tail."""
    res = residual_map(w_cal, gt_cal, blur_sigma=1.0)
    return float(np.percentile(res.data[:, :, 0], 99.0))


@dataclass
class CalibrationResult:
    wide_cal: Raster
    tele_cal: Raster
    gt_cal: Raster
    alignment: ScaleAlignResult
    lut: object | None  # ColorLUT in intensity mode, None for the 3D path
    occlusion: float
    diagnostics: list[str]


def calibrate_images(
    w2: Raster, t2: Raster, t1: Raster, cfg: PipelineConfig
) -> CalibrationResult:
    """Run the full calibration chain on loaded rasters.

    Order: scale alignment, dense-flow refinement, color alignment, final
    centered crop.
    """
    diagnostics: list[str] = []
    res = scale_align(
        w2,
        t1,
        t2,
        min_matches=cfg.min_matches,
        ratio_threshold=cfg.ratio_threshold,
        inlier_px=cfg.ransac_inlier_px,
        max_iters=cfg.ransac_max_iters,
        seed=cfg.ransac_seed,
        min_overlap_px=cfg.min_overlap_px,
        gt_frame=cfg.gt_frame,
    )
    w_cal, t_cal, gt_cal = res.w_cal, res.t_cal, res.gt_cal

    # Flow assumes brightness constancy, which cross-device tones violate;
    # estimate it on a provisionally tone-matched copy, then warp the
    # original frame with the result.
    if cfg.flow_direction == "gt_to_wide":
        toned = apply_lut(gt_cal, build_intensity_lut(gt_cal, w_cal))
        flow = compute_flow(
            w_cal, toned, levels=cfg.flow_levels, window=cfg.flow_window, iters=cfg.flow_iters
        )
        gt_cal = warp_with_flow(gt_cal, flow)
    else:
        toned = apply_lut(w_cal, build_intensity_lut(w_cal, gt_cal))
        flow = compute_flow(
            gt_cal, toned, levels=cfg.flow_levels, window=cfg.flow_window, iters=cfg.flow_iters
        )
        w_cal = warp_with_flow(w_cal, flow)

    lut = None
    if cfg.lut_mode == "intensity":
        lut = build_intensity_lut(gt_cal, w_cal)
        gt_cal = apply_lut(gt_cal, lut)
    else:
        gt_cal = build_apply_lut3d(gt_cal, w_cal, bins=cfg.lut_bins)

    if w_cal.width >= cfg.crop_width and w_cal.height >= cfg.crop_height:
        w_cal = center_crop(w_cal, cfg.crop_width, cfg.crop_height)
        t_cal = center_crop(t_cal, cfg.crop_width, cfg.crop_height)
        gt_cal = center_crop(gt_cal, cfg.crop_width, cfg.crop_height)
    else:
        diagnostics.append(
            f"crop skipped: calibrated size {w_cal.width}x{w_cal.height} smaller "
            f"than configured {cfg.crop_width}x{cfg.crop_height}"
        )

    score = occlusion_score(w_cal, gt_cal)
    return CalibrationResult(
        wide_cal=w_cal,
        tele_cal=t_cal,
        gt_cal=gt_cal,
        alignment=res,
        lut=lut,
        occlusion=score,
        diagnostics=diagnostics,
    )


def calibrate_entry(
    entry: ManifestEntry, cfg: PipelineConfig, ws: Workspace
) -> tuple[ManifestEntry, list[str]]:
    """Calibrate one ACQUIRED entry; failures are recorded, not raised."""
    if entry.stage != "ACQUIRED":
        raise ContractViolation(f"{entry.id}: calibrate requires stage ACQUIRED, found {entry.stage}")
    w2 = load_png(ws.resolve(entry.wide))
    t2 = load_png(ws.resolve(entry.tele))
    t1 = load_png(ws.resolve(entry.gt_raw))
    try:
        result = calibrate_images(w2, t2, t1, cfg)
    except AlignmentError as exc:
        failed = ManifestEntry.from_record({**entry.to_record(), "error": str(exc)})
        return failed, [f"{entry.id}: {exc}"]

    out_dir = ws.calibrated_dir(entry.id)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "wide_cal": out_dir / "wide_cal.png",
        "tele_cal": out_dir / "tele_cal.png",
        "gt_cal": out_dir / "gt_cal.png",
    }
    save_png(result.wide_cal, paths["wide_cal"])
    save_png(result.tele_cal, paths["tele_cal"])
    save_png(result.gt_cal, paths["gt_cal"])
    (out_dir / "alignment.json").write_text(result.alignment.audit_json())
    if result.lut is not None:
        (out_dir / "color_lut.json").write_text(result.lut.to_json())

    updated = entry.advanced(
        "CALIBRATED",
        wide_cal=ws.relativize(paths["wide_cal"]),
        tele_cal=ws.relativize(paths["tele_cal"]),
        gt_cal=ws.relativize(paths["gt_cal"]),
        homography=result.alignment.h_gt_to_wide.to_rows(),
        occlusion_score=result.occlusion,
        error=None,
    )
    return updated, result.diagnostics


# ---------------------------------------------------------------------------
# experimental protocols
# ---------------------------------------------------------------------------

def degraded_dims(width: int, height: int, factor: int) -> tuple[int, int]:
    """Intermediate dims of the degradation step (floored division)."""
    if factor < 2:
        raise ContractViolation(f"factor must be >= 2, got {factor}")
    small_w = width // factor
    small_h = height // factor
    if small_w < 1 or small_h < 1:
        raise ContractViolation(f"image {width}x{height} too small for factor {factor}")
    return small_w, small_h


def degrade_theoretical(img: Raster, factor: int) -> Raster:
    """Bicubic downsample by factor (floored dims), then restore to original.

    Emulates the fixed-upscaling input regime: detail is destroyed while
    pixel count is preserved.
    """
    small_w, small_h = degraded_dims(img.width, img.height, factor)
    small = resample_bicubic(img, small_w, small_h)
    return resample_bicubic(small, img.width, img.height)


@dataclass
class MethodRow:
    method: str
    psnr_db: float
    ssim: float
    count: int


@dataclass
class MetricsTable:
    protocol: str
    rows: list[MethodRow] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    def formatted(self) -> str:
        lines = [f"{'method':<24} {'PSNR':>9} {'SSIM':>7} {'n':>4}"]
        for r in self.rows:
            lines.append(f"{r.method:<24} {r.psnr_db:>9.4f} {r.ssim:>7.4f} {r.count:>4}")
        return "\n".join(lines)


def _method_dirs(outputs_dir: Path) -> list[tuple[str, Path]]:
    subdirs = sorted(p for p in outputs_dir.iterdir() if p.is_dir())
    if subdirs:
        return [(p.name, p) for p in subdirs]
    return [(outputs_dir.name, outputs_dir)]


def evaluate(
    outputs_dir: str | Path,
    manifest: Manifest,
    protocol: str,
    ws: Workspace,
) -> MetricsTable:
    """Score method outputs against calibrated ground truth, mask-aware.

    outputs_dir either contains <id>.png files (one method) or one
    subdirectory of them per method. Under the realistic protocol, outputs
    larger than the ground truth are bicubic-downsampled before scoring;
    under the theoretical protocol dims must match exactly.
    """
    if protocol not in ("realistic", "theoretical"):
        raise ContractViolation(f"unknown protocol {protocol!r}")
    outputs_dir = Path(outputs_dir)
    if not outputs_dir.is_dir():
        raise ContractViolation(f"{outputs_dir}: not a directory")

    accepted = [e for e in manifest.ordered() if e.stage == "ACCEPTED"]
    table = MetricsTable(protocol=protocol)
    if not accepted:
        raise NoStatisticsError("no ACCEPTED entries to evaluate")

    for method, method_dir in _method_dirs(outputs_dir):
        psnrs: list[float] = []
        ssims: list[float] = []
        for entry in accepted:
            out_path = method_dir / f"{entry.id}.png"
            if not out_path.exists():
                table.diagnostics.append(f"{method}/{entry.id}: output missing; excluded")
                continue
            if not entry.gt_cal:
                table.diagnostics.append(f"{entry.id}: no calibrated ground truth; excluded")
                continue
            gt = load_png(ws.resolve(entry.gt_cal))
            out = load_png(out_path)
            if (out.width, out.height) != (gt.width, gt.height):
                oversized = out.width >= gt.width and out.height >= gt.height
                if protocol == "realistic" and oversized:
                    out = resample_bicubic(out, gt.width, gt.height)
                else:
                    table.diagnostics.append(
                        f"{method}/{entry.id}: dims {out.width}x{out.height} != "
                        f"{gt.width}x{gt.height}; excluded"
                    )
                    continue
            assert (out.width, out.height) == (gt.width, gt.height)
            mask = None
            if entry.mask:
                mask_path = ws.resolve(entry.mask)
                if mask_path.exists():
                    mask = load_png(mask_path)
            psnrs.append(psnr(out, gt, mask))
            ssims.append(ssim(out, gt, mask))
        if psnrs:
            table.rows.append(
                MethodRow(
                    method=method,
                    psnr_db=float(np.mean(psnrs)),
                    ssim=float(np.mean(ssims)),
                    count=len(psnrs),
                )
            )
    if not table.rows:
        raise NoStatisticsError("no evaluable (method, entry) pairs")
    return table


# ---------------------------------------------------------------------------
# stats and split
# ---------------------------------------------------------------------------

@dataclass
class StageReport:
    counts: dict[str, int]
    rejected_by_reason: dict[str, int]
    train_count: int
    test_count: int

    def formatted(self) -> str:
        lines = [f"{'stage':<12} {'count':>6}"]
        for stage, n in self.counts.items():
            lines.append(f"{stage:<12} {n:>6}")
        if self.rejected_by_reason:
            lines.append("rejected by reason:")
            for reason, n in sorted(self.rejected_by_reason.items()):
                lines.append(f"  {reason:<10} {n:>6}")
        lines.append(f"split: {self.train_count} train + {self.test_count} test")
        return "\n".join(lines)


def stats_and_split(
    manifest: Manifest,
    seed: int,
    train_fraction: float,
    assign: bool = True,
) -> StageReport:
    """Stage counts plus a deterministic seeded train/test split.

    ACCEPTED entries are shuffled by a PRNG seeded with `seed` and split at
    round(train_fraction * n). With assign=True the split is written back
    to the manifest.
    """
    counts = manifest.stage_counts()
    accepted_ids = sorted(e.id for e in manifest.entries.values() if e.stage == "ACCEPTED")
    shuffled = accepted_ids.copy()
    random.Random(seed).shuffle(shuffled)
    n_train = int(round(train_fraction * len(shuffled)))
    train_ids = set(shuffled[:n_train])
    if assign:
        for entry_id in accepted_ids:
            entry = manifest.entries[entry_id]
            split = "train" if entry_id in train_ids else "test"
            if entry.split != split:
                manifest.upsert(replace(entry, split=split))
    return StageReport(
        counts=counts,
        rejected_by_reason=manifest.reject_reasons(),
        train_count=n_train,
        test_count=len(shuffled) - n_train,
    )
