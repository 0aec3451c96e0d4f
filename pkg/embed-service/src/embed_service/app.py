"""FastAPI application exposing the embedding wire contract.

Routes:

* ``GET  /v1/info``        -> model descriptor JSON; 503 while loading
* ``POST /v1/embed/text``  -> {"texts": [...]}  -> {"vectors", "dim", "normalized"}
* ``POST /v1/embed/image`` -> {"images": [b64 PNG, ...]} -> same shape

Batches are capped at 256 items (413 beyond), empty or malformed payloads
get 400, undecodable images 400.  A single encoder instance serves all
requests; inference is serialized on a lock so concurrent clients are safe
and results stay deterministic.  Vectors travel as plain decimal floats.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

BATCH_LIMIT = 256


def create_app(encoder=None, loader=None, batch_limit: int = BATCH_LIMIT) -> FastAPI:
    """Build the service around an encoder.

    Pass ``encoder`` directly, or ``loader`` (a zero-argument callable) to
    load it in the background on startup; /v1/info answers 503 until the
    loader finishes.
    """
    app = FastAPI(title="embed-service")
    state = {"encoder": encoder, "error": None}
    inference_lock = threading.Lock()

    if encoder is None and loader is not None:

        def _load():
            try:
                state["encoder"] = loader()
            except Exception as exc:  # surfaced on /v1/info
                state["error"] = str(exc)

        threading.Thread(target=_load, daemon=True).start()

    def _ready():
        if state["encoder"] is None:
            detail = state["error"] or "model is still loading"
            return None, JSONResponse({"error": detail}, status_code=503)
        return state["encoder"], None

    async def _json_body(request: Request):
        try:
            body = await request.json()
        except Exception:
            return None, JSONResponse({"error": "body must be JSON"}, status_code=400)
        if not isinstance(body, dict):
            return None, JSONResponse({"error": "body must be a JSON object"}, status_code=400)
        return body, None

    def _check_batch(items, what):
        if not isinstance(items, list) or not items:
            return JSONResponse(
                {"error": f"{what} must be a non-empty array"}, status_code=400
            )
        if len(items) > batch_limit:
            return JSONResponse(
                {"error": f"batch of {len(items)} exceeds the {batch_limit}-item limit"},
                status_code=413,
            )
        return None

    def _vector_payload(vectors):
        return {
            "vectors": [[float(v) for v in row] for row in vectors],
            "dim": int(vectors.shape[1]),
            "normalized": True,
        }

    @app.get("/v1/info")
    def info():
        enc, not_ready = _ready()
        if not_ready is not None:
            return not_ready
        return enc.info().to_dict()

    @app.post("/v1/embed/text")
    async def embed_text(request: Request):
        enc, not_ready = _ready()
        if not_ready is not None:
            return not_ready
        body, bad = await _json_body(request)
        if bad is not None:
            return bad
        texts = body.get("texts")
        bad = _check_batch(texts, "texts")
        if bad is not None:
            return bad
        if not all(isinstance(t, str) and t for t in texts):
            return JSONResponse(
                {"error": "texts must be non-empty strings"}, status_code=400
            )
        with inference_lock:
            vectors = enc.embed_texts(texts)
        return _vector_payload(vectors)

    @app.post("/v1/embed/image")
    async def embed_image(request: Request):
        enc, not_ready = _ready()
        if not_ready is not None:
            return not_ready
        body, bad = await _json_body(request)
        if bad is not None:
            return bad
        images_b64 = body.get("images")
        bad = _check_batch(images_b64, "images")
        if bad is not None:
            return bad
        from .encoders import decode_png

        decoded = []
        for i, payload in enumerate(images_b64):
            try:
                decoded.append(decode_png(payload))
            except Exception:
                return JSONResponse(
                    {"error": f"image {i} is not decodable base64 PNG"}, status_code=400
                )
        with inference_lock:
            vectors = enc.embed_images(decoded)
        return _vector_payload(vectors)

    return app
