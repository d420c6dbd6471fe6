"""FastAPI application implementing the embedding-service wire protocol.

Routes and formats match the remote scorer's contract exactly:
POST /embed_text {"texts": [...]}, POST /embed_image {"images": [{"id":...,
"path"|"b64":...}]} -> {"dim": D, "vectors": [...]}, GET /health.  Error
codes: 400 malformed payload, 413 over the batch limit, 422 undecodable
image, 503 model not loaded.
"""

from __future__ import annotations

import base64
import threading

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .backends import UndecodableImage, create_backend, preprocess_image
from .config import ServiceConfig


def _error(code: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=code, content={"error": message})


def create_app(config: ServiceConfig | None = None, backend="auto") -> FastAPI:
    config = config or ServiceConfig()
    if backend == "auto":
        backend = create_backend(config)
    app = FastAPI(title="embedsvc", docs_url=None, redoc_url=None)
    # inference is serialized; request handling above it stays concurrent
    inference_lock = threading.Lock()

    @app.exception_handler(RequestValidationError)
    async def malformed_payload(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed payload: {exc.errors()[:1]}")

    def require_backend():
        if backend is None:
            return _error(503, f"model {config.model!r} is not loaded")
        return None

    @app.get("/health")
    def health():
        unavailable = require_backend()
        if unavailable is not None:
            return unavailable
        return {
            "model": backend.model_name,
            "dim": backend.dim,
            "max_batch": config.max_batch,
            "preprocess": config.preprocess,
        }

    @app.post("/embed_text")
    async def embed_text(request: Request):
        unavailable = require_backend()
        if unavailable is not None:
            return unavailable
        payload, problem = await _read_json(request)
        if problem:
            return _error(400, problem)
        texts = payload.get("texts")
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            return _error(400, "body must be {\"texts\": [list of strings]}")
        if len(texts) > config.max_batch:
            return _error(413, f"batch of {len(texts)} exceeds limit {config.max_batch}")
        with inference_lock:
            vectors = backend.embed_texts(texts) if texts else []
        return {"dim": backend.dim, "vectors": [list(map(float, v)) for v in vectors]}

    @app.post("/embed_image")
    async def embed_image(request: Request):
        unavailable = require_backend()
        if unavailable is not None:
            return unavailable
        payload, problem = await _read_json(request)
        if problem:
            return _error(400, problem)
        items = payload.get("images")
        if not isinstance(items, list):
            return _error(400, "body must be {\"images\": [{\"id\":..., \"path\"|\"b64\":...}]}")
        if len(items) > config.max_batch:
            return _error(413, f"batch of {len(items)} exceeds limit {config.max_batch}")
        images = []
        for i, item in enumerate(items):
            if not isinstance(item, dict) or "id" not in item:
                return _error(400, f"image item {i} needs an id")
            item_id = str(item["id"])
            try:
                raw = _item_bytes(item, item_id)
            except UndecodableImage as exc:
                return _error(422, str(exc))
            except ValueError as exc:
                return _error(400, str(exc))
            try:
                images.append(preprocess_image(raw, item_id, config))
            except UndecodableImage as exc:
                return _error(422, str(exc))
        with inference_lock:
            vectors = backend.embed_images(images) if images else []
        return {"dim": backend.dim, "vectors": [list(map(float, v)) for v in vectors]}

    return app


async def _read_json(request: Request):
    try:
        return await request.json(), None
    except Exception:
        return None, "request body is not valid JSON"


def _item_bytes(item: dict, item_id: str) -> bytes:
    """Raw bytes for one image item.

    Structural problems (missing fields, broken base64) raise ValueError and
    map to 400; an unreadable path means the image cannot be decoded (422).
    """
    if "b64" in item:
        try:
            return base64.b64decode(item["b64"], validate=True)
        except Exception as exc:
            raise ValueError(f"image {item_id!r}: invalid base64: {exc}") from exc
    if "path" in item:
        try:
            with open(item["path"], "rb") as fh:
                return fh.read()
        except OSError as exc:
            raise UndecodableImage(item_id, f"cannot read path: {exc}") from exc
    raise ValueError(f"image {item_id!r} needs a path or b64 field")
