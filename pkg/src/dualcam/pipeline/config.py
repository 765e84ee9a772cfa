"""Pipeline configuration: a flat key = value text file.

Lines are `key = value`; blank lines and `#` comments are ignored. Every
field has a documented default; unknown keys are rejected so typos cannot
silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from ..errors import ContractViolation


@dataclass
class PipelineConfig:
    # final crop applied after color alignment
    crop_width: int = 3496
    crop_height: int = 2472
    # which frame keeps native resolution during scale alignment
    gt_frame: str = "tele"  # tele | wide
    # dense flow refinement
    flow_levels: int = 3
    flow_window: int = 15
    flow_iters: int = 10
    flow_direction: str = "gt_to_wide"  # gt_to_wide | wide_to_gt
    # color alignment
    lut_mode: str = "intensity"  # intensity | lut3d
    lut_bins: int = 32
    # feature matching / robust estimation
    min_matches: int = 50
    ratio_threshold: float = 0.75
    ransac_inlier_px: float = 2.0
    ransac_max_iters: int = 2000
    ransac_seed: int = 0
    min_overlap_px: int = 32
    # dataset split
    split_seed: int = 42
    train_fraction: float = 0.728
    # evaluation / degradation
    degrade_factor: int = 4

    def __post_init__(self):
        if self.crop_width < 1 or self.crop_height < 1:
            raise ContractViolation("crop dims must be >= 1")
        if self.gt_frame not in ("tele", "wide"):
            raise ContractViolation(f"gt_frame must be tele or wide, got {self.gt_frame!r}")
        if self.flow_levels < 1:
            raise ContractViolation("flow_levels must be >= 1")
        if self.flow_window < 5 or self.flow_window % 2 == 0:
            raise ContractViolation("flow_window must be odd and >= 5")
        if self.flow_direction not in ("gt_to_wide", "wide_to_gt"):
            raise ContractViolation(f"bad flow_direction {self.flow_direction!r}")
        if self.lut_mode not in ("intensity", "lut3d"):
            raise ContractViolation(f"lut_mode must be intensity or lut3d, got {self.lut_mode!r}")
        if self.lut_bins not in (1, 16, 32, 64):
            raise ContractViolation("lut_bins must be one of 1, 16, 32, 64")
        if not (0.0 < self.ratio_threshold < 1.0):
            raise ContractViolation("ratio_threshold must be in (0, 1)")
        if self.ransac_inlier_px <= 0:
            raise ContractViolation("ransac_inlier_px must be > 0")
        if self.ransac_max_iters < 1:
            raise ContractViolation("ransac_max_iters must be >= 1")
        if self.min_matches < 4:
            raise ContractViolation("min_matches must be >= 4")
        if not (0.0 < self.train_fraction < 1.0):
            raise ContractViolation("train_fraction must be in (0, 1)")
        if self.degrade_factor < 2:
            raise ContractViolation("degrade_factor must be >= 2")


def load_config(path: str | Path) -> PipelineConfig:
    text = Path(path).read_text()
    known = {f.name: f.type for f in fields(PipelineConfig)}
    casts = {f.name: type(getattr(PipelineConfig(), f.name)) for f in fields(PipelineConfig)}
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractViolation(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known:
            raise ContractViolation(f"{path}:{lineno}: unknown config key {key!r}")
        cast = casts[key]
        try:
            values[key] = cast(val) if cast is not bool else val.lower() in ("1", "true", "yes")
        except ValueError as exc:
            raise ContractViolation(f"{path}:{lineno}: bad value for {key}: {val!r}") from exc
    return PipelineConfig(**values)


def dump_config(cfg: PipelineConfig) -> str:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(PipelineConfig)]
    return "\n".join(lines) + "\n"
