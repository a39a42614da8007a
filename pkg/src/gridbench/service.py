"""HTTP API serving the web console and programmatic clients.

One orchestrator, many sessions; within a session turns serialize (a second
concurrent chat returns 409).  All responses carrying numerals include the
provenance map.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .caseio import BUILTIN_CASES, UnknownCaseError
from .metrics import MetricsLog
from .orchestrator import BackendConfig, Orchestrator
from .session import AgentContext


class CreateSessionRequest(BaseModel):
    case_name: str = "case14"


class ChatRequest(BaseModel):
    utterance: str


class ServiceState:
    def __init__(self, config: Optional[BackendConfig] = None,
                 metrics: Optional[MetricsLog] = None,
                 case_dir: Optional[str] = None,
                 session_dir: Optional[str] = None):
        self.metrics = metrics or MetricsLog()
        self.orchestrator = Orchestrator(config=config, metrics=self.metrics)
        self.sessions: dict[str, AgentContext] = {}
        self.turn_locks: dict[str, threading.Lock] = {}
        self.case_dir = case_dir
        self.session_dir = session_dir or "./sessions"
        self._registry_problems = self.orchestrator.registry.self_test()

    def get(self, session_id: str) -> AgentContext:
        ctx = self.sessions.get(session_id)
        if ctx is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return ctx


def create_app(config: Optional[BackendConfig] = None,
               metrics: Optional[MetricsLog] = None,
               case_dir: Optional[str] = None,
               session_dir: Optional[str] = None,
               console_dir: Optional[str] = None) -> FastAPI:
    state = ServiceState(config, metrics, case_dir, session_dir)
    app = FastAPI(title="gridbench", version="0.1.0")
    app.state.bench = state
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(HTTPException)
    async def _http_exc(request, exc: HTTPException):
        return JSONResponse(status_code=exc.status_code,
                            content={"error": exc.status_code, "detail": exc.detail})

    @app.post("/api/sessions")
    def create_session(req: CreateSessionRequest):
        try:
            ctx = AgentContext.from_case(req.case_name, state.case_dir)
        except UnknownCaseError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        state.sessions[ctx.session_id] = ctx
        state.turn_locks[ctx.session_id] = threading.Lock()
        return {"session_id": ctx.session_id, "summary": ctx.summary(),
                "cases": list(BUILTIN_CASES)}

    @app.get("/api/sessions/{session_id}")
    def session_summary(session_id: str):
        return state.get(session_id).summary()

    @app.post("/api/sessions/{session_id}/chat")
    def chat(session_id: str, req: ChatRequest):
        ctx = state.get(session_id)
        lock = state.turn_locks[session_id]
        if not lock.acquire(blocking=False):
            raise HTTPException(status_code=409,
                                detail="a turn is already in flight for this session")
        try:
            result = state.orchestrator.handle_utterance(ctx, req.utterance)
        finally:
            lock.release()
        return {
            "response": result.response,
            "ok": result.ok,
            "provenance": [e.model_dump() for e in result.provenance],
            "workflow": ctx.workflow.model_dump(mode="json"),
            "plan": result.plan.model_dump(mode="json") if result.plan else None,
            "payloads": {r.tool_name: r.payload for r in result.tool_results},
            "summary": ctx.summary(),
        }

    @app.get("/api/sessions/{session_id}/solution")
    def solution(session_id: str):
        ctx = state.get(session_id)
        art = ctx.artifact("acopf")
        if art is None:
            raise HTTPException(status_code=404,
                                detail="no dispatch solution stored yet; "
                                       "chat a solve request first")
        fresh = ctx.freshness_check("acopf")
        return {"solution": art.payload,
                "provenance": art.provenance.model_dump(mode="json"),
                "fresh": fresh.reuse,
                "stale_diffs": fresh.stale_diffs}

    @app.get("/api/sessions/{session_id}/contingencies")
    def contingencies(session_id: str, top: int = 5):
        ctx = state.get(session_id)
        art = ctx.artifact("contingency")
        if art is None:
            raise HTTPException(status_code=404,
                                detail="no contingency analysis stored yet; "
                                       "ask for a contingency sweep first")
        payload = dict(art.payload)
        by_branch = {r["contingency"]["branch_index"]: r
                     for r in payload.get("results", [])}
        ranking = []
        for ce in payload.get("ranking", [])[:top]:
            detail = by_branch.get(ce["contingency"]["branch_index"], {})
            ranking.append({**ce,
                            "overloaded_branches": detail.get("overloaded_branches", []),
                            "low_voltage_buses": detail.get("low_voltage_buses", []),
                            "status": detail.get("status")})
        fresh = ctx.freshness_check("contingency")
        return {"case_name": payload.get("case_name"),
                "scope": payload.get("scope"),
                "summary": payload.get("summary"),
                "ranking": ranking,
                "result_count": len(payload.get("results", [])),
                "provenance": art.provenance.model_dump(mode="json"),
                "fresh": fresh.reuse}

    @app.get("/api/metrics")
    def metrics_view(limit: int = 100):
        return {"events": [e.model_dump(mode="json")
                           for e in state.metrics.events(limit)]}

    @app.get("/api/health")
    def health():
        return {"status": "ok", "registry_problems": state._registry_problems,
                "sessions": len(state.sessions)}

    if console_dir and Path(console_dir).is_dir():
        app.mount("/", StaticFiles(directory=console_dir, html=True), name="console")

    return app
