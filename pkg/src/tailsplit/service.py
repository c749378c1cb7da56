"""HTTP JSON API over the campaign store.

Thin wire layer: every document returned here is the canonical dict produced
by :mod:`tailsplit.campaign`; nothing is recomputed or reshaped, so a client
sees exactly what the store persists.  Mutations are serialized per store
(single writer), reads are lock-free.
"""

from __future__ import annotations

import threading

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .campaign import AbatementTable, CampaignStore
from .splitting import LadderConfig

__all__ = ["create_app"]


class ConfigBody(BaseModel):
    alpha: float
    p: float
    s1: float
    k: int
    m: int | None = None
    gamma: float = 0.05
    budget: int = 2000


class AbatementBody(BaseModel):
    points: list[list[float]]
    provenance: str = ""


class SessionCreateBody(BaseModel):
    config: ConfigBody
    model: str = "gpd"
    estimator: str = "enhanced"
    estimator_options: dict = Field(default_factory=dict)
    abatement: AbatementBody | None = None


class BatchBody(BaseModel):
    """One recorded batch: explicit outcomes, or just the failure count."""

    outcomes: list[int] | None = None
    failures: int | None = None


def create_app(store: CampaignStore) -> FastAPI:
    app = FastAPI(title="tailsplit campaign service")
    write_lock = threading.Lock()

    def _get_or_404(session_id: str):
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"no session {session_id!r}")

    @app.post("/sessions", status_code=201)
    def create_session(body: SessionCreateBody):
        try:
            config = LadderConfig(**body.config.model_dump())
            abatement = None
            if body.abatement is not None:
                abatement = AbatementTable.from_list(
                    body.abatement.points,
                    provenance=body.abatement.provenance)
            with write_lock:
                session = store.create_session(
                    config, model=body.model, abatement=abatement,
                    estimator=body.estimator,
                    estimator_options=body.estimator_options)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return session.to_dict()

    @app.get("/sessions")
    def list_sessions():
        return store.list_sessions()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return _get_or_404(session_id).to_dict()

    @app.post("/sessions/{session_id}/batches")
    def record_batch(session_id: str, body: BatchBody):
        session = _get_or_404(session_id)
        if (body.outcomes is None) == (body.failures is None):
            raise HTTPException(status_code=422,
                                detail="give either outcomes or failures")
        if body.outcomes is not None:
            outcomes = body.outcomes
        else:
            k = session.config.k
            if not 0 <= body.failures <= k:
                raise HTTPException(status_code=422,
                                    detail=f"failures must lie in [0, {k}]")
            outcomes = [1] * body.failures + [0] * (k - body.failures)
        if session.status != "awaiting-batch":
            raise HTTPException(
                status_code=409,
                detail=f"session is {session.status}, not awaiting a batch")
        try:
            with write_lock:
                session = store.record_batch(session_id, outcomes)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return session.to_dict()

    @app.get("/sessions/{session_id}/report")
    def get_report(session_id: str):
        _get_or_404(session_id)
        return store.report(session_id)

    @app.get("/sessions/{session_id}/recommendation")
    def get_recommendation(session_id: str):
        session = _get_or_404(session_id)
        return {"session_id": session.id, "status": session.status,
                "recommendation": session.recommendation()}

    return app
