"""HTTP JSON service for graph exploration and what-if inference.

Read-only over a loaded graph: slices, node lookups, structural stats,
dataset downloads, and an async what-if job queue (one inference at a time,
FIFO; chat backends are slow, so the UI polls). Every engine error maps to
one documented code.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .blanket import DatasetConfig, build_whatif_query, generate_dataset
from .errors import (
    CtgError,
    GraphNotLoaded,
    NoBlanketFound,
    ReasonerFailure,
    UnknownNode,
)
from .graph import WorldGraph
from .inference import deterministic_reasoner, execute, plan_inference

JOB_TTL_SECONDS = 3600.0

_STATUS_BY_CODE = {
    "UNKNOWN_NODE": 404,
    "UNKNOWN_ENDPOINT": 404,
    "GRAPH_NOT_LOADED": 409,
    "NO_BLANKET_FOUND": 422,
    "CYCLIC_QUERY_REGION": 422,
    "UNRESOLVABLE_NODE": 422,
    "NO_SHARED_OBSERVATIONS": 422,
    "INVALID_VARIABLE": 422,
    "DOMAIN_VIOLATION": 422,
    "REASONER_FAILURE": 502,
    "PARSE_FAILURE": 502,
    "AMBIGUOUS_ABDUCTION": 502,
    "ABDUCTION_CONFLICT": 502,
    "BACKEND_FAILURE": 502,
    "MAX_RETRIES_EXCEEDED": 502,
}


@dataclass
class Job:
    job_id: str
    status: str = "queued"  # queued | running | done | error | canceled
    result: dict | None = None
    error: dict | None = None
    created: float = field(default_factory=time.time)

    def to_dict(self) -> dict:
        data = {"job_id": self.job_id, "status": self.status}
        if self.result is not None:
            data["result"] = self.result
        if self.error is not None:
            data["error"] = self.error
        return data


class JobRunner:
    """FIFO job queue with a single worker thread and TTL-based expiry."""

    def __init__(self, ttl: float = JOB_TTL_SECONDS):
        self.jobs: "OrderedDict[str, Job]" = OrderedDict()
        self.ttl = ttl
        self._lock = threading.Lock()
        self._queue: list[tuple[str, Any]] = []
        self._wake = threading.Condition(self._lock)
        self._worker = threading.Thread(target=self._run, daemon=True)
        self._worker.start()

    def submit(self, fn) -> str:
        job_id = uuid.uuid4().hex[:12]
        with self._wake:
            self._expire()
            self.jobs[job_id] = Job(job_id=job_id)
            self._queue.append((job_id, fn))
            self._wake.notify()
        return job_id

    def get(self, job_id: str) -> Job | None:
        with self._lock:
            self._expire()
            return self.jobs.get(job_id)

    def cancel(self, job_id: str) -> Job | None:
        with self._lock:
            job = self.jobs.get(job_id)
            if job and job.status == "queued":
                job.status = "canceled"
            return job

    def _expire(self) -> None:
        now = time.time()
        stale = [jid for jid, job in self.jobs.items() if now - job.created > self.ttl]
        for jid in stale:
            del self.jobs[jid]

    def _run(self) -> None:
        while True:
            with self._wake:
                while not self._queue:
                    self._wake.wait()
                job_id, fn = self._queue.pop(0)
                job = self.jobs.get(job_id)
                if job is None or job.status == "canceled":
                    continue
                job.status = "running"
            try:
                result = fn()
                status, payload = "done", result
            except CtgError as exc:
                status, payload = "error", {
                    "code": exc.code,
                    "message": str(exc),
                    "detail": type(exc).__name__,
                }
            except Exception as exc:  # keep the worker alive
                status, payload = "error", {
                    "code": "ENGINE_ERROR",
                    "message": str(exc),
                    "detail": type(exc).__name__,
                }
            with self._lock:
                job = self.jobs.get(job_id)
                if job is not None and job.status != "canceled":
                    job.status = status
                    if status == "done":
                        job.result = payload
                    else:
                        job.error = payload


class WhatIfRequest(BaseModel):
    target: str
    interventions: dict[str, str]
    factual_world: str
    reasoner: str = "det"
    max_retries: int = 5


class DatasetRequest(BaseModel):
    n_samples: int = 400
    k: int = 1
    path_cap: int = 50
    seed: int = 0


def _error_response(exc: CtgError) -> JSONResponse:
    status = _STATUS_BY_CODE.get(exc.code, 500)
    return JSONResponse(
        status_code=status,
        content={"code": exc.code, "message": str(exc), "detail": type(exc).__name__},
    )


def _node_snapshot(graph: WorldGraph, node_id: str) -> dict:
    var = graph.nodes[node_id]
    return var.to_dict()


def create_app(
    graph: WorldGraph | None = None,
    scm=None,
    chat_backend=None,
) -> FastAPI:
    """Service over one loaded graph; reasoners are optional extras."""
    app = FastAPI(title="ctg", version="0.1.0")
    state: dict[str, Any] = {
        "graph": graph,
        "scm": scm,
        "chat_backend": chat_backend,
        "jobs": JobRunner(),
        "etag": None,
    }
    if graph is not None:
        state["etag"] = hashlib.sha256(graph.to_json().encode("utf-8")).hexdigest()

    def require_graph() -> WorldGraph:
        if state["graph"] is None:
            raise GraphNotLoaded("no graph loaded into the service")
        return state["graph"]

    @app.exception_handler(CtgError)
    async def _handle(_request: Request, exc: CtgError):
        return _error_response(exc)

    @app.get("/api/graph")
    def api_graph(
        world: str | None = None,
        neighborhood_of: str | None = None,
        radius: int = 1,
        limit: int = 500,
        after: str | None = None,
        response: Response = None,
    ):
        g = require_graph()
        node_ids = set(g.nodes)
        if world is not None:
            if world not in g.worlds:
                raise UnknownNode(f"unknown world {world!r}")
            node_ids &= g.instantiated_in(world)
        if neighborhood_of is not None:
            from .retrieval import expand

            nodes, _ = expand(g, [neighborhood_of], max(0, radius))
            node_ids &= nodes
        ordered = sorted(node_ids)
        if after is not None:
            ordered = [nid for nid in ordered if nid > after]
        page = ordered[: max(1, min(limit, 5000))]
        page_set = set(page)
        edges = [
            g.edges[key].to_dict()
            for key in sorted(g.edges)
            if key[0] in page_set and key[1] in page_set
        ]
        body = {
            "nodes": [_node_snapshot(g, nid) for nid in page],
            "edges": edges,
            "total": len(ordered),
            "next_after": page[-1] if len(ordered) > len(page) else None,
            "worlds": {wid: g.worlds[wid] for wid in sorted(g.worlds)},
        }
        if response is not None and state["etag"]:
            response.headers["ETag"] = state["etag"]
        return body

    @app.get("/api/node/{node_id}")
    def api_node(node_id: str):
        g = require_graph()
        g.require(node_id)
        parents = sorted(g.parents(node_id))
        children = sorted(g.children(node_id))
        return {
            "node": _node_snapshot(g, node_id),
            "parents": parents,
            "children": children,
        }

    @app.get("/api/stats")
    def api_stats(max_cycle_len: int = 14):
        g = require_graph()
        return g.graph_stats(max_cycle_len=max_cycle_len).to_dict()

    @app.post("/api/whatif")
    def api_whatif(request: WhatIfRequest):
        g = require_graph()
        if not request.interventions:
            raise NoBlanketFound("whatif requires at least one intervention")
        query = build_whatif_query(
            g, request.target, dict(request.interventions), request.factual_world
        )
        plan = plan_inference(query)
        if request.reasoner == "det":
            if state["scm"] is None:
                raise ReasonerFailure("no deterministic overlay configured")
            reasoner = deterministic_reasoner(state["scm"])
        elif request.reasoner == "chat":
            if state["chat_backend"] is None:
                raise ReasonerFailure("no chat backend configured")
            from .inference import chat_reasoner

            reasoner = chat_reasoner(state["chat_backend"])
        else:
            raise ReasonerFailure(f"unknown reasoner {request.reasoner!r}")

        def run() -> dict:
            result = execute(plan, query, reasoner, max_retries=request.max_retries)
            return {
                "query": query.to_dict(),
                "plan": plan.to_dict(),
                "result": result.to_dict(),
            }

        job_id = state["jobs"].submit(run)
        return {"job_id": job_id, "poll": f"/api/jobs/{job_id}"}

    @app.get("/api/jobs/{job_id}")
    def api_job(job_id: str):
        job = state["jobs"].get(job_id)
        if job is None:
            raise UnknownNode(f"unknown job {job_id!r}")
        return job.to_dict()

    @app.delete("/api/jobs/{job_id}")
    def api_job_cancel(job_id: str):
        job = state["jobs"].cancel(job_id)
        if job is None:
            raise UnknownNode(f"unknown job {job_id!r}")
        return job.to_dict()

    @app.post("/api/dataset")
    def api_dataset(request: DatasetRequest):
        g = require_graph()
        config = DatasetConfig(
            n_samples=request.n_samples,
            k=request.k,
            path_cap=request.path_cap,
            seed=request.seed,
        )
        import warnings as warnings_mod

        with warnings_mod.catch_warnings(record=True) as caught:
            warnings_mod.simplefilter("always")
            queries = generate_dataset(g, config)
        headers = {}
        if len(queries) < request.n_samples:
            headers["X-CTG-Warning"] = (
                f"partial dataset: {len(queries)} of {request.n_samples}"
            )

        def stream():
            for query in queries:
                yield json.dumps(query.to_dict(), sort_keys=True, ensure_ascii=False)
                yield "\n"

        return StreamingResponse(
            stream(), media_type="application/jsonl", headers=headers
        )

    return app


def serve(graph_path: str, port: int = 8000, scm_path: str | None = None) -> None:
    import uvicorn

    from .graph import load_graph
    from .scm import load_overlay

    graph = load_graph(graph_path)
    scm = load_overlay(scm_path) if scm_path else None
    chat_backend = None
    import os

    if os.environ.get("CTG_CHAT_URL"):
        from .extraction import HttpChatBackend

        chat_backend = HttpChatBackend()
    app = create_app(graph, scm=scm, chat_backend=chat_backend)
    uvicorn.run(app, host="127.0.0.1", port=port)
