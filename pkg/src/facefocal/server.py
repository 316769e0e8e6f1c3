"""Review API: the queue/decision/stats surface consumed by the browser UI
and by headless contract tests. Also serves region images and, when built,
the UI bundle.
"""

from __future__ import annotations

from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .errors import ConflictError, FaceFocalError
from .review import AnnotationStore


class QueueItem(BaseModel):
    id: str
    image_url: str
    region: tuple[float, float, float, float]
    description: str
    task: str
    label: str | None = None


class DecisionRequest(BaseModel):
    id: str
    action: Literal["approve", "edit", "reject"]
    edited_text: str | None = None


class DecisionResponse(BaseModel):
    id: str
    status: str


class StatsResponse(BaseModel):
    counts: dict[str, int]
    pending: int


def create_app(store: AnnotationStore, ui_dist: Path | None = None) -> FastAPI:
    app = FastAPI(title="facefocal review")

    @app.get("/api/queue", response_model=list[QueueItem])
    def get_queue(limit: int = Query(default=50, ge=1, le=1000)):
        return [
            QueueItem(
                id=item.region_id,
                image_url=f"/images/{item.region_id}",
                region=item.region,
                description=item.description,
                task=item.task,
                label=item.label,
            )
            for item in store.queue(limit)
        ]

    @app.post("/api/decision", response_model=DecisionResponse)
    def post_decision(req: DecisionRequest):
        if req.action == "edit" and not req.edited_text:
            raise HTTPException(status_code=422, detail="edit requires edited_text")
        try:
            item = store.decide(req.id, req.action, req.edited_text)
        except ConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except FaceFocalError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return DecisionResponse(id=item.region_id, status=item.status)

    @app.get("/api/stats", response_model=StatsResponse)
    def get_stats():
        counts = store.stats()
        return StatsResponse(counts=counts, pending=counts["machine_generated"])

    @app.get("/images/{region_id}")
    def get_image(region_id: str):
        try:
            item = store.get(region_id)
        except FaceFocalError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        path = Path(item.image_path)
        if not path.exists():
            raise HTTPException(status_code=404, detail=f"image missing for {region_id}")
        return FileResponse(path)

    if ui_dist and Path(ui_dist).exists():
        app.mount("/", StaticFiles(directory=ui_dist, html=True), name="ui")

    return app
