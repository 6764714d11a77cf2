"""HTTP prediction/generation API over a loaded model.

The model is loaded once and shared read-only across request handlers, so
identical requests always produce identical responses.  Submitted drawings
are not persisted unless an audit log path is given explicitly.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, Field

from .corpus import DrawingPoint
from .featurize import DEFAULT_BANDWIDTH
from .generate import UnknownLabelError, generate_drawing
from .model import TrainedModel, load_model, model_to_bytes
from .predict import predict


class PointIn(BaseModel):
    view: Literal["front", "back"]
    x: float = Field(ge=0.0, le=1.0)
    y: float = Field(ge=0.0, le=1.0)
    intensity: float = Field(default=1.0, gt=0.0, le=1.0)


class PredictRequest(BaseModel):
    points: list[PointIn]
    bandwidth: float | None = Field(default=None, gt=0.0)


class GenerateRequest(BaseModel):
    label: str
    n_top: int = Field(default=10, ge=1)


def _model_metadata(model: TrainedModel, training_id: str) -> dict:
    cfg = model.config
    return {
        "k": cfg.k,
        "t": cfg.t,
        "s": cfg.s,
        "v": cfg.v,
        "l_vocab": cfg.l_vocab,
        "training_id": training_id,
    }


def create_app(model: TrainedModel,
               bandwidth: float = DEFAULT_BANDWIDTH,
               audit_log: str | Path | None = None,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="ibtm", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    training_id = hashlib.sha256(model_to_bytes(model)).hexdigest()[:12]
    audit_lock = threading.Lock()
    audit_path = Path(audit_log) if audit_log else None

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        errors = [{"field": ".".join(str(p) for p in err["loc"] if p != "body"),
                   "message": err["msg"]} for err in exc.errors()]
        return JSONResponse(status_code=400,
                            content={"detail": "malformed body", "errors": errors})

    @app.get("/healthz")
    async def healthz():
        return PlainTextResponse("ok")

    @app.get("/v1/labels")
    async def labels():
        return {"labels": list(model.label_vocab.labels)}

    @app.get("/v1/model")
    async def model_info():
        return _model_metadata(model, training_id)

    @app.post("/v1/predict")
    async def predict_endpoint(body: PredictRequest):
        if not body.points:
            return JSONResponse(status_code=422,
                                content={"detail": "points must not be empty"})
        points = [DrawingPoint(view=p.view, x=p.x, y=p.y, intensity=p.intensity)
                  for p in body.points]
        result = predict(points, model, bandwidth=body.bandwidth or bandwidth)
        response = {
            "labels": [{"label": lab, "score": score}
                       for lab, score in result.ranked],
            "budget": result.budget,
            "regions": result.regions.n,
            "model": _model_metadata(model, training_id),
        }
        if audit_path is not None:
            record = {"n_points": len(points), "budget": result.budget,
                      "regions": result.regions.n,
                      "top": result.ranked[0][0] if result.ranked else None}
            with audit_lock, audit_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")
        return response

    @app.post("/v1/generate")
    async def generate_endpoint(body: GenerateRequest):
        try:
            drawing = generate_drawing(body.label, model, n_top=body.n_top)
        except UnknownLabelError as exc:
            return JSONResponse(status_code=404, content={"detail": str(exc)})
        return {
            "label": drawing.source_label,
            "locations": [{"view": v, "x": x, "y": y, "weight": w}
                          for v, x, y, w in drawing.locations],
        }

    ui = _resolve_ui_dir(ui_dir)
    if ui is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=ui, html=True), name="ui")

    return app


def _resolve_ui_dir(ui_dir: str | Path | None) -> Path | None:
    candidates = []
    if ui_dir is not None:
        candidates.append(Path(ui_dir))
    env = os.environ.get("IBTM_UI_DIR")
    if env:
        candidates.append(Path(env))
    candidates.append(Path.cwd() / "frontend" / "dist")
    for cand in candidates:
        if cand.is_dir():
            return cand
    return None


def run_server(model_path: str | Path, port: int = 8752,
               host: str = "127.0.0.1",
               bandwidth: float = DEFAULT_BANDWIDTH,
               audit_log: str | Path | None = None,
               ui_dir: str | Path | None = None) -> None:
    import uvicorn

    model = load_model(model_path)
    app = create_app(model, bandwidth=bandwidth, audit_log=audit_log,
                     ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)
