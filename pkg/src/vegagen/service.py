"""HTTP service: paste a data array, get back scored chart-spec candidates.

One checkpoint is loaded at startup and never swapped. Requests are pure
functions of (checkpoint, request): replaying a request returns identical
candidates. Endpoints:

* POST /generate        decode candidates for one record
* GET  /datasets/random one bundled demo dataset
* GET  /health          liveness + model status
"""

from __future__ import annotations

import hashlib
import os
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .corpus import CorpusError, Dataset, backward_transform, forward_transform, infer_schema
from .datasets import UnknownDataset, random_rdataset, rdataset
from .decoding import beam_search
from .tokenizer import TooLong, decode as decode_ids, encode
from .trainer import Checkpoint, load_checkpoint
from .validator import validate_text

CHECKPOINT_ENV = "VEGAGEN_CHECKPOINT"
MAX_BEAM_WIDTH = 64


class GenerateRequest(BaseModel):
    data: list[dict] | None = None
    dataset: str | None = None
    beam_width: int = 15
    max_candidates: int | None = None
    row_index: int = 0


def checkpoint_digest(path) -> str:
    """Short content hash identifying a checkpoint file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"detail": message})


def create_app(checkpoint_path=None) -> FastAPI:
    """Build the service app, loading the checkpoint named by argument or env.

    Without a checkpoint the app still serves /health and /datasets/random;
    /generate answers 503.
    """
    app = FastAPI(title="vegagen", version="0.1.0")
    app.state.model = None
    app.state.checkpoint_id = ""

    path = checkpoint_path or os.environ.get(CHECKPOINT_ENV)
    if path:
        model: Checkpoint = load_checkpoint(path)
        app.state.model = model
        app.state.checkpoint_id = checkpoint_digest(path)

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return _error(400, f"malformed request body: {exc.errors()[:3]}")

    @app.get("/health")
    def health():
        loaded = app.state.model is not None
        return {
            "status": "ok" if loaded else "degraded",
            "model_loaded": loaded,
            "checkpoint_id": app.state.checkpoint_id,
        }

    @app.get("/datasets/random")
    def datasets_random():
        ds = random_rdataset(np.random.default_rng())
        return {"name": ds.name, "data": ds.records}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        model: Checkpoint | None = app.state.model
        if model is None:
            return _error(503, "no model loaded; start the service with a checkpoint")

        if (req.data is None) == (req.dataset is None):
            return _error(400, "provide exactly one of data (inline records) or dataset (bundled name)")
        if not 1 <= req.beam_width <= MAX_BEAM_WIDTH:
            return _error(400, f"beam_width must be in [1, {MAX_BEAM_WIDTH}]")
        if req.max_candidates is not None and req.max_candidates < 1:
            return _error(400, "max_candidates must be >= 1 when given")

        if req.dataset is not None:
            try:
                ds = rdataset(req.dataset)
            except UnknownDataset:
                return _error(400, f"unknown bundled dataset {req.dataset!r}")
        else:
            if not req.data:
                return _error(400, "data array is empty")
            ds = Dataset(records=req.data, name="inline")

        try:
            schema = infer_schema(ds)
        except CorpusError as e:
            return _error(400, str(e))
        if not 0 <= req.row_index < len(ds.records):
            return _error(400, f"row_index {req.row_index} outside 0..{len(ds.records) - 1}")

        source, mapping = forward_transform(ds.records[req.row_index], schema)
        max_len = model.params.hyper.max_len
        try:
            ids = encode(source, model.src_vocab, max_len)
        except TooLong:
            return _error(413, f"row normalizes to more than {max_len} characters")

        hyps = beam_search(ids, model.params, k=req.beam_width, max_len=max_len,
                           record_alignment=False)
        candidates = []
        for hyp in hyps:
            restored = backward_transform(decode_ids(hyp.tokens, model.tgt_vocab), mapping)
            res = validate_text(restored, schema=schema)
            candidates.append({
                "spec_text": restored,
                "score": float(hyp.score),
                "language_valid": res.language_valid,
                "visualization_valid": res.visualization_valid,
                "phantom_fields": list(res.phantom_fields),
            })
        if req.max_candidates is not None:
            candidates = candidates[: req.max_candidates]
        return {
            "candidates": candidates,
            "schema": [{"name": f.name, "kind": f.kind} for f in schema],
            "checkpoint_id": app.state.checkpoint_id,
            "dataset_name": ds.name,
            "row_index": req.row_index,
        }

    return app
