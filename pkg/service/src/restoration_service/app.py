"""HTTP surface.

Endpoints:
  POST /v1/restore  image + upscale factors -> restored image
  POST /v1/embed    image -> unit-norm embedding
  GET  /healthz     readiness and model identities

Status codes: 400 malformed payload (bad JSON, schema violation, or an
image field that does not decode), 422 structurally valid but
unsupported upscale factors, 503 before the model handles are ready,
413 bodies over the 16 MiB cap. Unknown JSON fields are ignored.
"""

from __future__ import annotations

import time
from contextlib import asynccontextmanager
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import imaging

MAX_BODY_BYTES = 16 * 1024 * 1024
SUPPORTED_FACTORS = (1, 2, 4)


class RestoreRequest(BaseModel):
    image: str
    format: Literal["pgm", "png"]
    b1: int = Field(ge=1)
    b2: int = Field(ge=1)
    prompt: str | None = None      # accepted, delegated to the mounted model
    request_id: str | None = None


class EmbedRequest(BaseModel):
    image: str
    format: Literal["pgm", "png"]


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


@asynccontextmanager
async def _lifespan(app: FastAPI):
    # reference back ends have nothing to load; a mounted model would
    # initialize here and flip readiness when done
    app.state.ready = True
    yield
    app.state.ready = False


def create_app() -> FastAPI:
    app = FastAPI(title="restoration-service", lifespan=_lifespan)
    app.state.ready = False

    @app.exception_handler(RequestValidationError)
    async def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed payload: {exc.errors()[:3]}")

    @app.middleware("http")
    async def cap_body_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and length.isdigit() and int(length) > MAX_BODY_BYTES:
            return _error(413, f"body exceeds {MAX_BODY_BYTES} bytes")
        return await call_next(request)

    @app.get("/healthz")
    async def healthz():
        if not app.state.ready:
            return _error(503, "loading")
        return {"status": "ok", "restore_model": imaging.RESTORE_MODEL_ID,
                "embed_provider": imaging.EMBED_PROVIDER_ID}

    @app.post("/v1/restore")
    async def restore(req: RestoreRequest):
        if not app.state.ready:
            return _error(503, "model not ready")
        if req.b1 not in SUPPORTED_FACTORS or req.b2 not in SUPPORTED_FACTORS:
            return _error(422, f"unsupported factors ({req.b1}, {req.b2}); "
                               f"reference model supports {SUPPORTED_FACTORS}")
        try:
            arr = imaging.decode_payload(req.image, req.format)
        except imaging.PayloadError as exc:
            return _error(400, str(exc))
        t0 = time.perf_counter()
        out = imaging.restore_image(arr, req.b1, req.b2)
        latency_ms = (time.perf_counter() - t0) * 1000.0
        return {"image": imaging.encode_payload(out, req.format),
                "format": req.format,
                "model": imaging.RESTORE_MODEL_ID,
                "latency_ms": latency_ms}

    @app.post("/v1/embed")
    async def embed(req: EmbedRequest):
        if not app.state.ready:
            return _error(503, "model not ready")
        try:
            arr = imaging.decode_payload(req.image, req.format)
        except imaging.PayloadError as exc:
            return _error(400, str(exc))
        vec = imaging.embed_image(arr)
        return {"embedding": vec.tolist(),
                "dimension": int(vec.size),
                "provider": imaging.EMBED_PROVIDER_ID}

    return app


app = create_app()
