"""Request/response bodies for the review service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field

PolygonLabel = Literal["motion", "defocus", "calibration_error", "other"]
RejectReason = Literal["misaligned", "blur", "shaking", "motion", "defocus", "other"]


class Polygon(BaseModel):
    label: PolygonLabel
    points: list[tuple[float, float]] = Field(min_length=3)


class AnnotationIn(BaseModel):
    polygons: list[Polygon] = Field(default_factory=list)
    author: str = "anonymous"
    revision: int = 0


class AnnotationOut(BaseModel):
    entry_id: str
    polygons: list[Polygon]
    author: str
    revision: int


class VerdictIn(BaseModel):
    decision: Literal["keep", "reject"]
    reason: Optional[RejectReason] = None
    author: str = "anonymous"


class PairSummary(BaseModel):
    id: str
    stage: str
    occlusion_score: Optional[float] = None
    has_annotation: bool = False
    verdict: Optional[str] = None


class PairDetail(BaseModel):
    id: str
    stage: str
    occlusion_score: Optional[float] = None
    split: Optional[str] = None
    verdict_reason: Optional[str] = None
    annotation: Optional[AnnotationOut] = None
    width: Optional[int] = None
    height: Optional[int] = None


class StatsOut(BaseModel):
    counts: dict[str, int]
    rejected_by_reason: dict[str, int]


class ErrorBody(BaseModel):
    code: str
    message: str
    details: list[str] = Field(default_factory=list)
