"""HTTP review service over a dataset workspace.

Serves capture pairs and assets, accepts polygon annotations (rasterized to
problematic-region masks), records keep/reject verdicts, and reports live
stage statistics. All manifest mutations funnel through one lock; asset
reads are lock-free.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from ..errors import StageOrderError
from ..flowalign import residual_map
from ..imagekit import Raster, load_png, save_png, _parse_ihdr
from ..pipeline.manifest import ManifestEntry
from ..pipeline.ops import Workspace
from .masks import rasterize_polygons
from .models import (
    AnnotationIn,
    AnnotationOut,
    ErrorBody,
    PairDetail,
    PairSummary,
    Polygon,
    StatsOut,
    VerdictIn,
)

ASSET_ROLES = ("wide", "tele", "gt", "wide_cal", "tele_cal", "gt_cal", "mask", "residual")

_STAGE_RANK = {"ACQUIRED": 0, "CALIBRATED": 1, "ANNOTATED": 2, "ACCEPTED": 3, "REJECTED": 3}


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, details: list[str] | None = None):
        self.status = status
        self.body = ErrorBody(code=code, message=message, details=details or [])


def create_app(workspace: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    ws = Workspace(workspace)
    app = FastAPI(title="dualcam review service")
    state = {"manifest": ws.load_manifest()}
    lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def api_error_handler(_req: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content=exc.body.model_dump())

    @app.exception_handler(RequestValidationError)
    async def validation_handler(_req: Request, exc: RequestValidationError):
        details = [
            f"{'.'.join(str(loc) for loc in err['loc'])}: {err['msg']}" for err in exc.errors()
        ]
        body = ErrorBody(code="validation", message="invalid request body", details=details)
        return JSONResponse(status_code=422, content=body.model_dump())

    def get_entry(entry_id: str) -> ManifestEntry:
        entry = state["manifest"].get(entry_id)
        if entry is None:
            raise ApiError(404, "not_found", f"unknown pair id {entry_id!r}")
        return entry

    def load_annotation(entry_id: str) -> AnnotationOut | None:
        path = ws.annotation_path(entry_id)
        if not path.exists():
            return None
        data = json.loads(path.read_text())
        return AnnotationOut(**data)

    def calibrated_dims(entry: ManifestEntry) -> tuple[int, int] | None:
        if not entry.wide_cal:
            return None
        path = ws.resolve(entry.wide_cal)
        if not path.exists():
            return None
        w, h, _, _, _ = _parse_ihdr(path)
        return w, h

    @app.get("/api/pairs", response_model=list[PairSummary])
    def list_pairs(stage: str | None = None):
        entries = state["manifest"].ordered()
        if stage is not None:
            entries = [e for e in entries if e.stage == stage]
        return [
            PairSummary(
                id=e.id,
                stage=e.stage,
                occlusion_score=e.occlusion_score,
                has_annotation=ws.annotation_path(e.id).exists(),
                verdict=("keep" if e.stage == "ACCEPTED" else "reject" if e.stage == "REJECTED" else None),
            )
            for e in entries
        ]

    @app.get("/api/pairs/{entry_id}", response_model=PairDetail)
    def get_pair(entry_id: str):
        entry = get_entry(entry_id)
        dims = calibrated_dims(entry)
        return PairDetail(
            id=entry.id,
            stage=entry.stage,
            occlusion_score=entry.occlusion_score,
            split=entry.split,
            verdict_reason=entry.verdict_reason,
            annotation=load_annotation(entry.id),
            width=dims[0] if dims else None,
            height=dims[1] if dims else None,
        )

    def asset_path(entry: ManifestEntry, role: str) -> Path:
        rel = {
            "wide": entry.wide,
            "tele": entry.tele,
            "gt": entry.gt_raw,
            "wide_cal": entry.wide_cal,
            "tele_cal": entry.tele_cal,
            "gt_cal": entry.gt_cal,
            "mask": entry.mask,
        }.get(role)
        if rel is None:
            raise ApiError(
                409,
                "missing_asset",
                f"asset {role!r} not materialized for {entry.id}",
                [f"entry stage is {entry.stage}"],
            )
        path = ws.resolve(rel)
        if not path.exists():
            raise ApiError(409, "missing_asset", f"asset file missing: {rel}")
        return path

    def residual_asset(entry: ManifestEntry) -> Path:
        cache = ws.residual_cache_path(entry.id)
        if cache.exists():
            return cache
        w_cal = asset_path(entry, "wide_cal")
        gt_cal = asset_path(entry, "gt_cal")
        res = residual_map(load_png(w_cal), load_png(gt_cal), blur_sigma=1.0)
        rendered = Raster(
            np.rint(np.clip(res.data[:, :, 0] * 255.0, 0, 255)).astype(np.uint8)[:, :, None]
        )
        cache.parent.mkdir(parents=True, exist_ok=True)
        save_png(rendered, cache)
        return cache

    @app.get("/api/pairs/{entry_id}/asset/{role}")
    def get_asset(entry_id: str, role: str):
        entry = get_entry(entry_id)
        if role not in ASSET_ROLES:
            raise ApiError(404, "not_found", f"unknown asset role {role!r}")
        path = residual_asset(entry) if role == "residual" else asset_path(entry, role)
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.put("/api/pairs/{entry_id}/annotation")
    def put_annotation(entry_id: str, body: AnnotationIn):
        with lock:
            entry = get_entry(entry_id)
            if _STAGE_RANK[entry.stage] < 1 or entry.stage in ("ACCEPTED", "REJECTED"):
                raise ApiError(
                    409,
                    "stage_order",
                    f"annotation requires stage CALIBRATED or ANNOTATED, found {entry.stage}",
                )
            dims = calibrated_dims(entry)
            if dims is None:
                raise ApiError(409, "missing_asset", "calibrated image not materialized")
            width, height = dims
            bad_points = [
                f"polygon {pi} point {qi}: ({x}, {y}) outside 0..{width} x 0..{height}"
                for pi, poly in enumerate(body.polygons)
                for qi, (x, y) in enumerate(poly.points)
                if not (0.0 <= x <= width and 0.0 <= y <= height)
            ]
            if bad_points:
                raise ApiError(422, "out_of_bounds", "annotation points out of bounds", bad_points)
            if body.revision != entry.annotation_revision:
                raise ApiError(
                    409,
                    "revision_conflict",
                    f"stale revision {body.revision}, current is {entry.annotation_revision}",
                )

            new_revision = entry.annotation_revision + 1
            mask = rasterize_polygons([list(p.points) for p in body.polygons], width, height)
            mask_path = ws.mask_path(entry.id)
            mask_path.parent.mkdir(parents=True, exist_ok=True)
            save_png(Raster(mask[:, :, np.newaxis]), mask_path)

            sidecar = AnnotationOut(
                entry_id=entry.id,
                polygons=body.polygons,
                author=body.author,
                revision=new_revision,
            )
            ann_path = ws.annotation_path(entry.id)
            ann_path.parent.mkdir(parents=True, exist_ok=True)
            ann_path.write_text(sidecar.model_dump_json())

            if entry.stage == "CALIBRATED":
                updated = entry.advanced(
                    "ANNOTATED",
                    mask=ws.relativize(mask_path),
                    annotation_revision=new_revision,
                )
            else:
                from dataclasses import replace

                updated = replace(
                    entry, mask=ws.relativize(mask_path), annotation_revision=new_revision
                )
            state["manifest"].upsert(updated)
            return {"revision": new_revision, "stage": updated.stage}

    @app.put("/api/pairs/{entry_id}/verdict")
    def put_verdict(entry_id: str, body: VerdictIn):
        with lock:
            entry = get_entry(entry_id)
            if entry.stage != "ANNOTATED":
                raise ApiError(
                    409, "stage_order", f"verdict requires stage ANNOTATED, found {entry.stage}"
                )
            if body.decision == "reject" and body.reason is None:
                raise ApiError(422, "validation", "reject verdicts require a reason")
            try:
                if body.decision == "keep":
                    updated = entry.advanced("ACCEPTED")
                else:
                    updated = entry.advanced("REJECTED", verdict_reason=body.reason)
            except StageOrderError as exc:
                raise ApiError(409, "stage_order", str(exc))
            state["manifest"].upsert(updated)
            return {"stage": updated.stage}

    @app.get("/api/stats", response_model=StatsOut)
    def get_stats():
        manifest = state["manifest"]
        return StatsOut(
            counts=manifest.stage_counts(), rejected_by_reason=manifest.reject_reasons()
        )

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/", StaticFiles(directory=Path(ui_dir), html=True), name="ui")

    return app
