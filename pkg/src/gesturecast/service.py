"""Stateless JSON estimation service.

POST /api/v1/estimate   run the pipeline on a strokes payload
GET  /api/v1/features   list the built-in features
GET  /api/v1/health     liveness probe

Requests are JSON ({"measures": [...], "strokes": [...], "spec_file": null})
or multipart/form-data with a `request` JSON field plus a `spec_file` upload
holding custom feature definitions. Responses carry exactly one of `errors`
or `result` (both appear when some measures succeed and others fail), plus a
`meta` object echoing the RNG seed so any response can be reproduced.
"""

from __future__ import annotations

import json
import os
import secrets
import threading

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import __version__
from .errors import (CorpusFormatError, InsufficientDataError, QualityError,
                     SandboxError, SandboxTimeoutError, UnknownFeatureError,
                     ValidationFailure)
from .features import is_builtin, registry
from .gestures import Gesture, strokes_from_obj, validate
from .pipeline import DEFAULT_POPULATION, EstimationRequest, estimate
from .sandbox import MAX_SOURCE_BYTES, SandboxPolicy, compile_spec

MAX_BODY_BYTES = 1024 * 1024


def _worker_limit() -> int:
    raw = os.environ.get("OMNIS_THREADS", "")
    try:
        return max(int(raw), 1)
    except ValueError:
        return max(min(os.cpu_count() or 1, 4), 1)


def _error(code: str, message: str, detail=None) -> dict:
    return {"code": code, "message": message, "detail": detail}


def create_app() -> FastAPI:
    app = FastAPI(title="gesturecast", version=__version__)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    workers = threading.Semaphore(_worker_limit())

    @app.get("/api/v1/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.get("/api/v1/features")
    def features():
        return [
            {"id": d.id, "unit": d.unit, "category": d.category,
             "description": d.description}
            for d in registry()
        ]

    @app.post("/api/v1/estimate")
    async def estimate_endpoint(request: Request):
        body = await request.body()
        if len(body) > MAX_BODY_BYTES:
            return JSONResponse(status_code=400, content={
                "errors": [_error("too_large", "request exceeds 1 MiB")],
                "result": None})

        content_type = request.headers.get("content-type", "")
        spec_source: str | None = None
        if content_type.startswith("multipart/form-data"):
            form = await request.form()
            raw = form.get("request")
            if raw is None:
                return JSONResponse(status_code=400, content={
                    "errors": [_error("bad_request",
                                      "multipart body needs a 'request' field")],
                    "result": None})
            upload = form.get("spec_file")
            if upload is not None:
                data = await upload.read() if hasattr(upload, "read") else \
                    str(upload).encode()
                if len(data) > MAX_SOURCE_BYTES:
                    return JSONResponse(status_code=400, content={
                        "errors": [_error("too_large",
                                          "spec_file exceeds 64 KiB")],
                        "result": None})
                spec_source = data.decode("utf-8", errors="replace")
            payload_text = raw if isinstance(raw, str) else (await raw.read()).decode()
        else:
            payload_text = body.decode("utf-8", errors="replace")

        try:
            payload = json.loads(payload_text)
            if not isinstance(payload, dict):
                raise ValueError("body must be a JSON object")
        except (json.JSONDecodeError, ValueError) as exc:
            return JSONResponse(status_code=400, content={
                "errors": [_error("bad_json", f"malformed request: {exc}")],
                "result": None})

        if isinstance(payload.get("spec_file"), str) and spec_source is None:
            spec_source = payload["spec_file"]  # inline fallback for JSON bodies

        return _run_estimate(payload, spec_source, workers)

    return app


def _run_estimate(payload: dict, spec_source: str | None,
                  workers: threading.Semaphore) -> JSONResponse:
    errors: list[dict] = []

    measures = payload.get("measures") or []
    if not isinstance(measures, list) or not all(isinstance(m, str) for m in measures):
        return JSONResponse(status_code=400, content={
            "errors": [_error("bad_request", "'measures' must be a list of strings")],
            "result": None})

    try:
        strokes = strokes_from_obj(payload.get("strokes"), context="strokes")
    except CorpusFormatError as exc:
        return JSONResponse(status_code=400, content={
            "errors": [_error("bad_strokes", str(exc))], "result": None})
    gesture = Gesture(strokes)
    violations = validate(gesture)
    if violations:
        return JSONResponse(status_code=400, content={
            "errors": [_error("invalid_gesture", "gesture failed validation",
                              violations)],
            "result": None})

    compiled = None
    custom = {}
    if spec_source is not None and spec_source.strip():
        try:
            compiled, definitions = compile_spec(spec_source, SandboxPolicy())
            custom = {d.id: d.compute for d in definitions}
        except SandboxError as exc:
            return JSONResponse(status_code=400, content={
                "errors": [_error("bad_spec", str(exc))], "result": None})

    known = [m for m in measures if is_builtin(m) or m in custom]
    for m in measures:
        if m not in known:
            errors.append(_error("unknown_measure", f"unknown measure {m!r}", m))
    feature_ids = list(dict.fromkeys(known + sorted(custom)))
    if not feature_ids:
        return JSONResponse(status_code=400, content={
            "errors": errors or [_error("bad_request",
                                        "no measures and no spec_file given")],
            "result": None})

    rng_seed = payload.get("rngSeed")
    if rng_seed is None:
        rng_seed = secrets.randbits(63)
    try:
        rng_seed = int(rng_seed)
    except (TypeError, ValueError):
        return JSONResponse(status_code=400, content={
            "errors": [_error("bad_request", "'rngSeed' must be an integer")],
            "result": None})

    n = payload.get("n", DEFAULT_POPULATION)
    if not isinstance(n, int) or n < 1 or n > 10_000:
        return JSONResponse(status_code=400, content={
            "errors": [_error("bad_request", "'n' must be an integer in [1, 10000]")],
            "result": None})

    request_obj = EstimationRequest([gesture], feature_ids, n_per_seed=n,
                                    rng_seed=rng_seed)
    try:
        with workers:
            result = estimate(request_obj, custom=custom)
    except QualityError as exc:
        return JSONResponse(status_code=422, content={
            "errors": [_error("quality", str(exc),
                              {"snrDb": exc.snr_db, "thresholdDb": exc.threshold_db})],
            "result": None,
            "meta": {"rngSeed": rng_seed}})
    except SandboxTimeoutError as exc:
        return JSONResponse(status_code=408, content={
            "errors": [_error("timeout", str(exc))], "result": None,
            "meta": {"rngSeed": rng_seed}})
    except (UnknownFeatureError, InsufficientDataError, ValidationFailure) as exc:
        return JSONResponse(status_code=400, content={
            "errors": [_error("bad_request", str(exc))], "result": None,
            "meta": {"rngSeed": rng_seed}})
    finally:
        if compiled is not None:
            compiled.close()

    units = {}
    for d in registry():
        if d.id in feature_ids:
            units[d.id] = d.unit
    for fid in custom:
        if fid in feature_ids:
            units[fid] = "custom"
    for fid, count in result.failures.items():
        if count:
            errors.append(_error("partial_failures",
                                 f"{count} variant evaluations failed for {fid!r}",
                                 {"feature": fid, "count": count}))

    return JSONResponse(status_code=200, content={
        "errors": errors or None,
        "result": {fid: est.to_obj() for fid, est in result.per_feature.items()},
        "meta": {
            "rngSeed": rng_seed,
            "populationSize": result.population_size,
            "seedSnrDb": list(result.seed_snrs),
            "units": units,
        },
    })


app = create_app()
