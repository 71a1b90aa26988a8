"""Local HTTP API for the web console; every answer ships with its validation
and usage reports, so no endpoint ever returns unchecked LLM text."""

from __future__ import annotations

import logging
from datetime import datetime, timezone
from typing import Optional

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .clustering import BehaviorModel, assign, extract_features
from .gateway import BackendError, GatewayClient
from .model import GpsQuality, LandmarkDirectory
from .pipeline import analyze_event, answer_query
from .planner import (
    DEFAULT_PLANNER_CONFIG,
    PlannerConfig,
    UnknownIntentError,
    UnknownLandmarkError,
)
from .store import Circle, QueryFilter, StoreKey, SummaryStore
from .validator import DEFAULT_VALIDATOR_CONFIG, ValidatorConfig

logger = logging.getLogger(__name__)


class QueryRequest(BaseModel):
    text: str


class MicroRequest(BaseModel):
    vehicle_id: str
    window_start: int


def _parse_ms(value: str, name: str) -> int:
    try:
        return int(value)
    except ValueError:
        pass
    try:
        text = value.replace("Z", "+00:00")
        parsed = datetime.fromisoformat(text)
        if parsed.tzinfo is None:
            parsed = parsed.replace(tzinfo=timezone.utc)
        return int(parsed.timestamp() * 1000)
    except ValueError as exc:
        raise HTTPException(400, f"malformed {name!r}: {value!r}") from exc


def _parse_filter(start: Optional[str], end: Optional[str], near: Optional[str],
                  min_quality: Optional[str]) -> QueryFilter:
    circle = None
    if near is not None:
        parts = near.split(",")
        if len(parts) != 3:
            raise HTTPException(400, f"malformed 'near': {near!r}; expected lat,lon,radius_m")
        try:
            circle = Circle(float(parts[0]), float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise HTTPException(400, f"malformed 'near': {near!r}: {exc}") from exc
    quality = None
    if min_quality is not None:
        try:
            quality = GpsQuality(min_quality)
        except ValueError as exc:
            raise HTTPException(400, f"malformed 'min_quality': {min_quality!r}") from exc
    return QueryFilter(
        start_ms=_parse_ms(start, "start") if start is not None else None,
        end_ms=_parse_ms(end, "end") if end is not None else None,
        circle=circle,
        min_gps_quality=quality,
    )


def create_app(*, store: SummaryStore, model: BehaviorModel,
               landmarks: LandmarkDirectory, client: GatewayClient,
               planner_config: PlannerConfig = DEFAULT_PLANNER_CONFIG,
               validator_config: ValidatorConfig = DEFAULT_VALIDATOR_CONFIG,
               static_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="fleetlens", version="0.1.0")

    @app.exception_handler(UnknownIntentError)
    async def _unknown_intent(_req: Request, exc: UnknownIntentError):
        return JSONResponse(status_code=422,
                            content={"detail": str(exc), "supported": list(exc.supported)})

    @app.exception_handler(UnknownLandmarkError)
    async def _unknown_landmark(_req: Request, exc: UnknownLandmarkError):
        return JSONResponse(status_code=422, content={"detail": str(exc)})

    @app.exception_handler(BackendError)
    async def _backend_error(_req: Request, exc: BackendError):
        return JSONResponse(status_code=502,
                            content={"detail": f"{type(exc).__name__}: {exc}"})

    @app.get("/events")
    def events(start: Optional[str] = None, end: Optional[str] = None,
               label: Optional[str] = None, near: Optional[str] = None,
               min_quality: Optional[str] = None):
        query = _parse_filter(start, end, near, min_quality)
        if label is not None and label not in model.label_map:
            raise HTTPException(400, f"unknown label {label!r}; known: {list(model.label_map)}")
        rows = store.scan(
            QueryFilter(start_ms=query.start_ms, end_ms=query.end_ms,
                        circle=query.circle, label=label,
                        min_gps_quality=query.min_gps_quality),
            model=model,
        )
        out = []
        for summary, assigned in rows:
            if summary.anchor_lat is None:
                continue  # nothing to draw
            out.append({
                "vehicle_id": summary.vehicle_id,
                "window_start": summary.window_start,
                "lat": summary.anchor_lat,
                "lon": summary.anchor_lon,
                "label": assigned,
                "instability": summary.mag_variance,
                "model_version": model.version,
            })
        return out

    @app.post("/query")
    def query(body: QueryRequest):
        if not body.text.strip():
            raise HTTPException(400, "query text must be non-empty")
        result = answer_query(
            body.text, store=store, model=model, landmarks=landmarks, client=client,
            planner_config=planner_config, validator_config=validator_config,
        )
        return result.to_json()

    @app.post("/micro")
    def micro(body: MicroRequest):
        key = StoreKey(body.vehicle_id, body.window_start)
        try:
            result = analyze_event(
                key, store=store, model=model, landmarks=landmarks, client=client,
                planner_config=planner_config, validator_config=validator_config,
            )
        except KeyError as exc:
            raise HTTPException(404, str(exc)) from exc
        return result.to_json()

    label_counts = {label: 0 for label in model.labels}
    for summary in store.iter_all():
        label_counts[assign(model, extract_features(summary))] += 1

    @app.get("/clusters")
    def clusters():
        return {
            "version": model.version,
            "k": model.k,
            "labels": list(model.labels),
            "label_map": {str(i): label for i, label in enumerate(model.label_map)},
            "centroids_normalized": [list(c) for c in model.centroids],
            "centroids": [list(c) for c in model.centroids_raw()],
            "counts": label_counts,
            "objective": model.objective,
        }

    if static_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="console")

    return app
