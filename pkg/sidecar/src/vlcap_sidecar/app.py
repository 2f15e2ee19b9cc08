"""FastAPI application exposing the embedding wire protocol."""

from __future__ import annotations

import base64
import binascii

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .models import (
    BatchTooLargeError,
    ImageDecodeError,
    ModelRegistry,
    UnknownModelError,
    decode_image,
    registry_from_env,
)


class TextRequest(BaseModel):
    model: str
    texts: list[str]


class ImageRequest(BaseModel):
    model: str
    image_b64: str


def create_app(registry: ModelRegistry | None = None) -> FastAPI:
    app = FastAPI(title="vlcap embedding sidecar")
    reg = registry if registry is not None else registry_from_env()

    @app.exception_handler(UnknownModelError)
    async def _unknown_model(request, exc: UnknownModelError):
        return JSONResponse(
            status_code=404,
            content={"error": f"unknown model {exc.name!r}", "known_models": exc.known},
        )

    @app.exception_handler(ImageDecodeError)
    async def _bad_image(request, exc: ImageDecodeError):
        return JSONResponse(status_code=422, content={"error": str(exc)})

    @app.exception_handler(BatchTooLargeError)
    async def _too_large(request, exc: BatchTooLargeError):
        return JSONResponse(status_code=413, content={"error": str(exc), "max_batch": exc.cap})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "models": reg.names}

    @app.post("/v1/embed/text")
    def embed_text(body: TextRequest):
        if not body.texts:
            return JSONResponse(status_code=422, content={"error": "texts must be non-empty"})
        if len(body.texts) > reg.max_batch:
            raise BatchTooLargeError(len(body.texts), reg.max_batch)
        entry = reg.get(body.model)
        vectors = entry.embed_texts(body.texts)
        return {"model": body.model, "dim": entry.dim, "vectors": [v.tolist() for v in vectors]}

    @app.post("/v1/embed/image")
    def embed_image(body: ImageRequest):
        entry = reg.get(body.model)
        try:
            raw = base64.b64decode(body.image_b64, validate=True)
        except (binascii.Error, ValueError) as exc:
            raise ImageDecodeError(f"invalid base64: {exc}") from exc
        vector = entry.embed_image(decode_image(raw))
        return {"model": body.model, "dim": entry.dim, "vector": vector.tolist()}

    return app
