"""HTTP application exposing a checkpointed classifier.

Endpoints follow protocol/PROTOCOL.md section 1. The predict route
parses its body by hand instead of relying on framework models so that
every malformed request maps to status 400 with an {"error": ...} body,
and an over-long batch maps to 413, exactly as the protocol requires.
"""

from __future__ import annotations

import json

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import ServedModel

MAX_BATCH_ROWS = 1024


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def _parse_batch(payload, input_dim: int):
    """Validate a decoded predict body and return an (n, input_dim) array.

    Returns either a float64 array or a JSONResponse describing the
    rejection. Booleans are refused even though they are ints in Python,
    and non-finite entries are refused even though json.loads admits
    NaN/Infinity literals.
    """
    if not isinstance(payload, dict):
        return _error(400, "request body must be a JSON object")
    if "inputs" not in payload:
        return _error(400, "request body must contain an 'inputs' key")
    rows = payload["inputs"]
    if not isinstance(rows, list):
        return _error(400, "'inputs' must be a list of rows")
    if len(rows) > MAX_BATCH_ROWS:
        return _error(
            413, f"batch of {len(rows)} rows exceeds the limit of {MAX_BATCH_ROWS}"
        )
    for i, row in enumerate(rows):
        if not isinstance(row, list):
            return _error(400, f"row {i} must be a list of numbers")
        if len(row) != input_dim:
            return _error(
                400, f"row {i} has {len(row)} features, expected {input_dim}"
            )
        for j, value in enumerate(row):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                return _error(400, f"row {i} entry {j} is not a number")
            if not np.isfinite(value):
                return _error(400, f"row {i} entry {j} is not finite")
    return np.asarray(rows, dtype=np.float64).reshape(len(rows), input_dim)


def create_app(model: ServedModel) -> FastAPI:
    """Build the application serving one loaded model for its lifetime."""
    app = FastAPI(openapi_url=None, docs_url=None, redoc_url=None)

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.get("/v1/info")
    def info():
        return {"input_dim": model.input_dim, "class_count": model.class_count}

    @app.post("/v1/predict")
    async def predict(request: Request):
        body = await request.body()
        try:
            payload = json.loads(body)
        except (UnicodeDecodeError, json.JSONDecodeError):
            return _error(400, "request body is not valid JSON")
        batch = _parse_batch(payload, model.input_dim)
        if isinstance(batch, JSONResponse):
            return batch
        probs = model.predict(batch)
        return {"probabilities": probs.tolist(), "model_id": model.model_id}

    return app
