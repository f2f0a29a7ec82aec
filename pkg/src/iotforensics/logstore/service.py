"""HTTP ingestion and query service."""
from __future__ import annotations

import json
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .records import KINDS, Batch, QueryFilter, RecordError
from .store import BatchConflict, DuplicateSeq, LogStore


def create_app(store: LogStore) -> FastAPI:
    app = FastAPI(title="forensic log store")
    write_lock = threading.Lock()

    @app.post("/logs")
    async def post_logs(request: Request):
        try:
            doc = json.loads(await request.body())
            batch = Batch.from_dict(doc)
        except (ValueError, RecordError) as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        try:
            with write_lock:
                stored = store.append_batch(batch)
                store.flush()
        except BatchConflict as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        except DuplicateSeq as exc:
            return JSONResponse({"error": str(exc)}, status_code=409)
        return JSONResponse({"batch_id": batch.batch_id, "stored": stored,
                             "records": len(batch.records)}, status_code=202)

    @app.get("/logs")
    def get_logs(request: Request):
        params = request.query_params
        try:
            filt = QueryFilter(
                ts_from=int(params["from"]) if "from" in params else None,
                ts_to=int(params["to"]) if "to" in params else None,
                device_ids=set(params.getlist("device")),
                kinds=set(params.getlist("kind")),
                app_ids=set(params.getlist("app")),
                location_mode=params.get("location"),
            )
        except ValueError as exc:
            return JSONResponse({"error": str(exc)}, status_code=400)
        bad = filt.kinds - set(KINDS)
        if bad:
            return JSONResponse({"error": f"unknown kinds {sorted(bad)}"}, status_code=400)
        return [r.to_dict() for r in store.query(filt)]

    return app


class HttpSink:
    """Transport sink that POSTs each batch to a running service."""

    def __init__(self, base_url: str, client=None) -> None:
        import httpx

        self.client = client or httpx.Client(base_url=base_url)
        self.responses: list[int] = []

    def __call__(self, batch: Batch) -> None:
        resp = self.client.post("/logs", json=batch.to_dict())
        self.responses.append(resp.status_code)
        resp.raise_for_status()
