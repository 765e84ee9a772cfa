"""Dataset manifest, calibration orchestration, protocols, and statistics."""

from .config import PipelineConfig, dump_config, load_config
from .manifest import Manifest, ManifestEntry, entry_id_for_files
from .ops import (
    CalibrationResult,
    MetricsTable,
    StageReport,
    Workspace,
    calibrate_entry,
    calibrate_images,
    degrade_theoretical,
    degraded_dims,
    evaluate,
    ingest,
    occlusion_score,
    stats_and_split,
)

__all__ = [
    "CalibrationResult",
    "Manifest",
    "ManifestEntry",
    "MetricsTable",
    "PipelineConfig",
    "StageReport",
    "Workspace",
    "calibrate_entry",
    "calibrate_images",
    "degrade_theoretical",
    "degraded_dims",
    "dump_config",
    "entry_id_for_files",
    "evaluate",
    "ingest",
    "load_config",
    "occlusion_score",
    "stats_and_split",
]
