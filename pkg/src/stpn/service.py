"""Read-only HTTP/JSON service over a trained checkpoint and dataset.

Endpoints (all JSON):
  GET  /api/model      config + version info
  GET  /api/airports   codes + coordinates
  POST /api/predict    PredictRequest -> prediction minutes
  POST /api/intervene  InterveneRequest -> intervention result
  GET  /api/attention  latest attention export

Errors return a problem document {"code", "message"} with a stable code:
bad_request (400), unknown_airport / bad_window (422), internal (500).
Artifacts load once at startup; requests never mutate shared state.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import __version__
from .data import DatasetBundle
from .graphs import MultiGraph
from .training import (
    Checkpoint,
    export_attention,
    intervene,
    predict_arrays,
    predict_window,
    UnknownAirport,
)

MODEL_INFO_SCHEMA_VERSION = 1
AIRPORTS_SCHEMA_VERSION = 1


class PredictRequest(BaseModel):
    window_start: str | None = None
    delays: list | None = None
    weather_codes: list | None = None
    mask: list | None = None
    pos_in: list[int] | None = None


class InterveneRequest(BaseModel):
    window_start: str
    airports: list[str]


def _problem(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"code": code, "message": message})


def create_app(ckpt: Checkpoint, bundle: DatasetBundle, graph: MultiGraph) -> FastAPI:
    app = FastAPI(title="delay propagation service", version=__version__)
    # read-only service; let the explorer run from any static origin
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["GET", "POST"], allow_headers=["*"]
    )

    h, p = ckpt.config.history_steps, ckpt.config.horizon_steps
    latest_start = bundle.delays.time_axis[max(0, bundle.delays.t - (h + p))]
    attention_doc = export_attention(ckpt, bundle, graph, latest_start)

    coords = graph.coordinates
    airports_doc = {
        "schema_version": AIRPORTS_SCHEMA_VERSION,
        "airports": [
            {
                "code": code,
                "lat": coords.get(code, (0.0, 0.0))[0],
                "lon": coords.get(code, (0.0, 0.0))[1],
            }
            for code in graph.airports
        ],
    }

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _problem(400, "bad_request", str(exc.errors()[:3]))

    @app.exception_handler(UnknownAirport)
    async def on_unknown_airport(request: Request, exc: UnknownAirport):
        return _problem(422, "unknown_airport", str(exc))

    @app.exception_handler(KeyError)
    async def on_key_error(request: Request, exc: KeyError):
        return _problem(422, "bad_window", str(exc))

    @app.exception_handler(ValueError)
    async def on_value_error(request: Request, exc: ValueError):
        return _problem(400, "bad_request", str(exc))

    @app.get("/api/model")
    def model_info():
        return {
            "schema_version": MODEL_INFO_SCHEMA_VERSION,
            "service_version": __version__,
            "config": ckpt.config.to_dict(),
            "metadata": ckpt.metadata,
        }

    @app.get("/api/airports")
    def airports():
        return airports_doc

    @app.post("/api/predict")
    def predict(req: PredictRequest):
        if req.window_start is not None:
            return predict_window(ckpt, bundle, graph, req.window_start)
        if req.delays is None or req.weather_codes is None:
            return _problem(
                400, "bad_request", "provide window_start or delays + weather_codes"
            )
        return predict_arrays(
            ckpt, graph, req.delays, req.weather_codes, mask=req.mask, pos_in=req.pos_in
        )

    @app.post("/api/intervene")
    def run_intervention(req: InterveneRequest):
        return intervene(ckpt, bundle, graph, req.window_start, req.airports)

    @app.get("/api/attention")
    def attention():
        return attention_doc

    return app


def serve(ckpt, bundle, graph, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the service; port 0 binds an ephemeral port and prints it."""
    import socket

    import uvicorn

    app = create_app(ckpt, bundle, graph)
    sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind((host, port))
    actual = sock.getsockname()[1]
    print(f"serving on http://{host}:{actual}", flush=True)
    config = uvicorn.Config(app, host=host, port=actual, log_level="warning")
    server = uvicorn.Server(config)
    server.run(sockets=[sock])
