"""Orchestrator-facing HTTP surface over the registry store.

A thin FastAPI layer: every endpoint delegates to the corresponding store
operation and adds no logic of its own.  Service URIs contain slashes, so
they ride in the path as percent-encoded or raw path segments (the `:path`
converter accepts both).
"""

from __future__ import annotations

from typing import Literal

import uvicorn
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel

from svcforge.attributes import FeedbackRecord, RuntimeProfile, ServiceRecord
from svcforge.registry import (
    PublishRejectedError,
    QueryFilters,
    RegistryStore,
    UnknownNodeFilterError,
    UnknownUriError,
)


class FeedbackRequest(BaseModel):
    event: Literal["like", "dislike", "comment"]
    author: str = ""
    text: str = ""


class SearchHit(BaseModel):
    service_uri: str
    score: float


class PublishResponse(BaseModel):
    service_uri: str


def create_app(store: RegistryStore) -> FastAPI:
    app = FastAPI(title="svcforge registry", version="0.1.0")

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.get("/services", response_model=list[ServiceRecord])
    def list_services(
        offset: int = Query(default=0, ge=0),
        limit: int | None = Query(default=None, ge=1),
        task_category: str | None = None,
        node_id: str | None = None,
        max_p50_ms: float | None = None,
    ):
        if task_category or node_id or max_p50_ms is not None:
            filters = QueryFilters(
                task_category=task_category, node_id=node_id, max_p50_ms=max_p50_ms
            )
            try:
                records = store.query_records(filters)
            except UnknownNodeFilterError as exc:
                raise HTTPException(status_code=404, detail=f"unknown node: {exc}")
            except ValueError as exc:
                raise HTTPException(status_code=400, detail=str(exc))
            end = offset + limit if limit is not None else None
            return records[offset:end]
        return store.list_records(offset=offset, limit=limit)

    @app.post("/services", response_model=PublishResponse, status_code=201)
    def publish_service(record: ServiceRecord):
        try:
            uri = store.publish_record(record)
        except PublishRejectedError as exc:
            raise HTTPException(status_code=422, detail=exc.report.model_dump(mode="json"))
        return PublishResponse(service_uri=uri)

    @app.get("/search", response_model=list[SearchHit])
    def search(q: str, k: int = Query(default=5, ge=1)):
        return [SearchHit(service_uri=uri, score=score) for uri, score in store.semantic_search(q, k)]

    @app.post("/services/{uri:path}/feedback", response_model=FeedbackRecord)
    def record_feedback(uri: str, request: FeedbackRequest):
        try:
            return store.record_feedback(
                uri, request.event, author=request.author, text=request.text
            )
        except UnknownUriError:
            raise HTTPException(status_code=404, detail=f"unknown service: {uri}")

    @app.get("/services/{uri:path}/profiles/{node_id}", response_model=RuntimeProfile)
    def get_profile(uri: str, node_id: str):
        try:
            record = store.get(uri)
        except UnknownUriError:
            raise HTTPException(status_code=404, detail=f"unknown service: {uri}")
        profile = record.profiles.get(node_id)
        if profile is None:
            raise HTTPException(status_code=404, detail=f"no profile for node: {node_id}")
        return profile

    @app.get("/services/{uri:path}", response_model=ServiceRecord)
    def get_service(uri: str):
        try:
            return store.get(uri)
        except UnknownUriError:
            raise HTTPException(status_code=404, detail=f"unknown service: {uri}")

    return app


def serve(bind_addr: str, store: RegistryStore) -> None:
    """Run the API until shutdown; uvicorn drains in-flight requests."""
    host, _, port = bind_addr.rpartition(":")
    uvicorn.run(create_app(store), host=host or "127.0.0.1", port=int(port))
