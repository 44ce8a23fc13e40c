"""HTTP service exposing retrieval, answering and admin ingestion."""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, field_validator

from .corpus import Document
from .kg_store import KGError, Triplet
from .llm import ProviderError
from .pipeline import Engine, RetrievalResult, Snapshot, answer
from .pipeline import retrieve as run_retrieve

logger = logging.getLogger(__name__)


class QueryBody(BaseModel):
    question: str
    top_k: int | None = Field(default=None, ge=1)
    hops: int | None = Field(default=None, ge=0)

    @field_validator("question")
    @classmethod
    def _non_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("question must be non-empty")
        return value


class TripletBody(BaseModel):
    head: str
    relation: str
    tail: str
    chunk_id: str


class IngestBody(BaseModel):
    doc_id: str = Field(min_length=1)
    title: str | None = None
    text: str
    triplets: list[TripletBody] = []
    extract: bool = False


def _overrides(body: QueryBody) -> dict:
    return {"budget_k": body.top_k, "seed_k": body.top_k, "m": body.hops}


def _context(result: RetrievalResult, snapshot: Snapshot) -> list[dict]:
    corpus = snapshot.corpus
    return [
        {"chunk_id": e.chunk_id, "text": corpus.text(e.chunk_id), "tree_rank": e.tree_rank, "score": e.tree_score, "source": e.source}
        for e in result.bundle.entries
    ]


def create_app(engine: Engine, persist: bool = False) -> FastAPI:
    app = FastAPI(title="kgrag")

    @app.exception_handler(RequestValidationError)
    async def _bad_request(request: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": [str(e.get("msg")) for e in exc.errors()]})

    @app.exception_handler(ProviderError)
    async def _provider_down(request: Request, exc: ProviderError) -> JSONResponse:
        return JSONResponse(status_code=503, content={"detail": f"provider unavailable: {exc}", "attempts": exc.attempts})

    @app.get("/health")
    def health() -> dict:
        return engine.health()

    @app.post("/retrieve")
    def retrieve(body: QueryBody) -> dict:
        snapshot = engine.snapshot
        result = run_retrieve(snapshot, body.question, engine.providers, engine.cfg.with_overrides(**_overrides(body)), engine.cache)
        out = result.to_dict()
        out["context"] = _context(result, snapshot)
        return out

    @app.post("/query")
    def query(body: QueryBody) -> dict:
        snapshot = engine.snapshot
        result = answer(snapshot, body.question, engine.providers, engine.cfg.with_overrides(**_overrides(body)), engine.cache)
        bundle = result.retrieval.bundle.to_dict()
        return {
            "answer": result.answer.text,
            "flags": result.answer.flags,
            "context": _context(result.retrieval, snapshot),
            "trees": bundle["trees"],
        }

    @app.post("/ingest")
    def ingest(body: IngestBody) -> dict:
        doc = Document(body.doc_id, body.title or body.doc_id, body.text)
        try:
            triplets = [Triplet(t.head, t.relation, t.tail, t.chunk_id) for t in body.triplets]
            report = engine.ingest([doc], triplets, extract=body.extract)
        except (KGError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        if persist:
            engine.save()
        return report.to_dict()

    @app.delete("/documents/{doc_id}")
    def delete_document(doc_id: str) -> dict:
        removed = engine.remove_document(doc_id)
        if removed is None:
            raise HTTPException(status_code=404, detail=f"unknown document {doc_id!r}")
        if persist:
            engine.save()
        return {"doc_id": doc_id, "removed_triplets": removed}

    return app
