"""Capture manifest: JSON Lines records with monotone stage transitions.

One line per event, append-friendly; the newest record per id wins on load.
Entry ids are content hashes of the three raw capture files, making ingest
idempotent.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from ..errors import StageOrderError

SCHEMA_VERSION = 1

STAGES = ("ACQUIRED", "CALIBRATED", "ANNOTATED", "ACCEPTED", "REJECTED")
_STAGE_ORDER = {name: i for i, name in enumerate(("ACQUIRED", "CALIBRATED", "ANNOTATED"))}
REJECT_REASONS = ("misaligned", "blur", "shaking", "motion", "defocus", "other")
SPLITS = ("train", "test")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


def entry_id_for_files(wide: Path, tele: Path, gt: Path) -> str:
    """First 16 hex chars of a SHA-256 over the three raw files."""
    digest = hashlib.sha256()
    for p in (wide, tele, gt):
        digest.update(Path(p).read_bytes())
    return digest.hexdigest()[:16]


@dataclass
class ManifestEntry:
    id: str
    wide: str
    tele: str
    gt_raw: str
    stage: str = "ACQUIRED"
    wide_cal: str | None = None
    tele_cal: str | None = None
    gt_cal: str | None = None
    mask: str | None = None
    verdict_reason: str | None = None
    split: str | None = None
    homography: list[list[float]] | None = None
    occlusion_score: float | None = None
    annotation_revision: int = 0
    error: str | None = None
    created_at: str = field(default_factory=_utcnow)
    updated_at: str = field(default_factory=_utcnow)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise StageOrderError(f"unknown stage {self.stage!r}")
        if self.stage == "REJECTED" and not self.verdict_reason:
            raise StageOrderError("REJECTED entries must carry a verdict reason")
        if self.verdict_reason is not None and self.verdict_reason not in REJECT_REASONS:
            raise StageOrderError(f"unknown verdict reason {self.verdict_reason!r}")
        if self.split is not None and self.split not in SPLITS:
            raise StageOrderError(f"unknown split {self.split!r}")

    def advanced(self, new_stage: str, **updates) -> "ManifestEntry":
        """Copy with a forward stage transition; backward moves are rejected."""
        if new_stage not in STAGES:
            raise StageOrderError(f"unknown stage {new_stage!r}")
        cur = self.stage
        if cur in ("ACCEPTED", "REJECTED"):
            raise StageOrderError(f"{self.id}: stage {cur} is terminal")
        if new_stage in ("ACCEPTED", "REJECTED"):
            if cur != "ANNOTATED":
                raise StageOrderError(
                    f"{self.id}: verdict requires stage ANNOTATED, found {cur}"
                )
        elif _STAGE_ORDER[new_stage] <= _STAGE_ORDER[cur] and new_stage != cur:
            raise StageOrderError(f"{self.id}: cannot move {cur} -> {new_stage}")
        return replace(self, stage=new_stage, updated_at=_utcnow(), **updates)

    def to_record(self) -> dict:
        rec = {"schema": SCHEMA_VERSION}
        rec.update({k: v for k, v in self.__dict__.items()})
        return rec

    @staticmethod
    def from_record(rec: dict) -> "ManifestEntry":
        rec = dict(rec)
        rec.pop("schema", None)
        return ManifestEntry(**rec)


class Manifest:
    """In-memory view over a JSONL file; writes append, loads compact."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.entries: dict[str, ManifestEntry] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                line = line.strip()
                if not line:
                    continue
                entry = ManifestEntry.from_record(json.loads(line))
                self.entries[entry.id] = entry  # last writer wins

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, entry_id: str) -> bool:
        return entry_id in self.entries

    def get(self, entry_id: str) -> ManifestEntry | None:
        return self.entries.get(entry_id)

    def ordered(self) -> list[ManifestEntry]:
        return [self.entries[k] for k in sorted(self.entries)]

    def upsert(self, entry: ManifestEntry, persist: bool = True) -> None:
        self.entries[entry.id] = entry
        if persist:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a") as fh:
                fh.write(json.dumps(entry.to_record()) + "\n")

    def compact(self) -> None:
        """Rewrite the file with one line per id, sorted, newest state."""
        tmp = self.path.with_suffix(".jsonl.tmp")
        with open(tmp, "w") as fh:
            for entry in self.ordered():
                fh.write(json.dumps(entry.to_record()) + "\n")
        tmp.replace(self.path)

    def stage_counts(self) -> dict[str, int]:
        """Cumulative counts: a stage counts every entry that reached it."""
        reached = {s: 0 for s in STAGES}
        for e in self.entries.values():
            reached["ACQUIRED"] += 1
            if e.stage in ("CALIBRATED", "ANNOTATED", "ACCEPTED", "REJECTED"):
                reached["CALIBRATED"] += 1
            if e.stage in ("ANNOTATED", "ACCEPTED", "REJECTED"):
                reached["ANNOTATED"] += 1
            if e.stage == "ACCEPTED":
                reached["ACCEPTED"] += 1
            if e.stage == "REJECTED":
                reached["REJECTED"] += 1
        return reached

    def reject_reasons(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for e in self.entries.values():
            if e.stage == "REJECTED" and e.verdict_reason:
                out[e.verdict_reason] = out.get(e.verdict_reason, 0) + 1
        return out
