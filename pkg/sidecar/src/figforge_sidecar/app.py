"""FastAPI application implementing the sidecar wire protocol.

Routes: POST /v1/classify, /v1/detect, /v1/embed; GET /healthz.  Images
arrive as base64-encoded PNG/JPEG inside JSON bodies.  Errors are JSON
objects {"error", "detail"} with status 400 (bad request) or 503 (model
unavailable).  Stub mode is the default; real-model mode is best-effort
and reports 503 until user-supplied weights are loaded.
"""

from __future__ import annotations

import base64
import binascii
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import stubmodel
from .__init__ import __version__


class ProtocolError(Exception):
    def __init__(self, status: int, error: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.error = error
        self.detail = detail


def _bad_request(detail: str) -> ProtocolError:
    return ProtocolError(400, "bad request", detail)


def _decode_image_field(body: dict) -> bytes:
    raw = body.get("image")
    if not isinstance(raw, str):
        raise _bad_request("field 'image' must be a base64 string")
    try:
        return base64.b64decode(raw, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise _bad_request(f"invalid base64 image: {exc}") from exc


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except ValueError as exc:
        raise _bad_request(f"body is not valid JSON: {exc}") from exc
    if not isinstance(body, dict):
        raise _bad_request("body must be a JSON object")
    return body


def create_app(mode: str = "stub", model_dir: str | None = None,
               embed_dim: int = stubmodel.DEFAULT_EMBED_DIM) -> FastAPI:
    if mode not in ("stub", "real"):
        raise ValueError("mode must be 'stub' or 'real'")
    app = FastAPI(title="figforge-sidecar", version=__version__)
    app.state.mode = mode
    app.state.embed_dim = embed_dim
    app.state.model_dir = Path(model_dir) if model_dir else None

    @app.exception_handler(ProtocolError)
    async def _protocol_error(_request: Request, exc: ProtocolError):
        return JSONResponse(status_code=exc.status,
                            content={"error": exc.error, "detail": exc.detail})

    def _require_model() -> None:
        if app.state.mode == "real":
            # Real-model mode needs user-supplied weights; nothing is
            # bundled, so the route reports unavailability.
            raise ProtocolError(503, "model unavailable",
                                "real-model mode has no loaded weights; "
                                "run in stub mode or supply a loader")

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok", "mode": app.state.mode,
                "embed_dim": app.state.embed_dim, "version": __version__}

    @app.post("/v1/classify")
    async def classify(request: Request):
        _require_model()
        payload = _decode_image_field(await _json_body(request))
        try:
            scores, categories = stubmodel.classify(payload)
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        return {"scores": scores, "categories": categories}

    @app.post("/v1/detect")
    async def detect(request: Request):
        _require_model()
        payload = _decode_image_field(await _json_body(request))
        try:
            boxes = stubmodel.detect(payload)
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        return {"boxes": boxes}

    @app.post("/v1/embed")
    async def embed(request: Request):
        _require_model()
        body = await _json_body(request)
        has_image = "image" in body
        has_text = "text" in body
        if has_image == has_text:
            raise _bad_request("exactly one of 'image' or 'text' is required")
        try:
            if has_image:
                vector = stubmodel.embed(_decode_image_field(body), "image",
                                         app.state.embed_dim)
            else:
                if not isinstance(body["text"], str):
                    raise _bad_request("field 'text' must be a string")
                vector = stubmodel.embed(body["text"].encode("utf-8"), "text",
                                         app.state.embed_dim)
        except ValueError as exc:
            raise _bad_request(str(exc)) from exc
        return {"vector": vector, "dim": app.state.embed_dim}

    return app
