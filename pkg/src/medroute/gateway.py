"""HTTP gateway tying the pipeline together.

Per turn: resolve session -> reformulate -> score -> select (or force) ->
concurrent specialist dispatch -> synthesis -> state update. Stage events
can be streamed over SSE so a client watches routing, individual specialist
completions, and the final answer arrive live. Many sessions run
concurrently; turns within one session are queued, never interleaved.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
from typing import AsyncIterator

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .config import GatewayConfig, load_config  # re-exported: config is gateway surface
from .conversation import ConversationState, SessionStore, reformulate
from .core import LabelScore, RoutingDecision, default_label_registry, is_known_label
from .errors import (
    InvalidInputError,
    MedrouteError,
    SynthesisFailedError,
    UpstreamUnavailableError,
)
from .orchestrator import synthesize
from .router import apply_strategy, forced_decision, resolve_scorer, score_labels
from .specialists import DispatchResult, dispatch, dispatch_stream

__all__ = ["GatewayConfig", "load_config", "create_app"]

log = logging.getLogger(__name__)


class ChatRequest(BaseModel):
    session_id: str | None = None
    message: str
    target_specialist: str | None = None


class ScoreRequest(BaseModel):
    text: str


class _Runtime:
    def __init__(self, config: GatewayConfig):
        self.config = config
        self.store = SessionStore(config.state_dir)
        self.scorer = resolve_scorer(config.scorer)
        self._session_locks: dict[str, asyncio.Lock] = {}

    def lock(self, session_id: str) -> asyncio.Lock:
        return self._session_locks.setdefault(session_id, asyncio.Lock())


class _Stopwatch:
    def __init__(self):
        self.timings: dict[str, int] = {}
        self._started = time.monotonic()

    def stage(self, name: str, since: float) -> None:
        self.timings[name] = int((time.monotonic() - since) * 1000)

    def finish(self) -> dict[str, int]:
        self.timings["total_ms"] = int((time.monotonic() - self._started) * 1000)
        return self.timings


def _validate_chat_request(req: ChatRequest) -> None:
    if not req.message or not req.message.strip():
        raise HTTPException(status_code=400, detail="message is empty")
    if req.target_specialist is not None and not is_known_label(req.target_specialist):
        raise HTTPException(
            status_code=400, detail=f"unknown target_specialist: {req.target_specialist!r}"
        )


async def _route_stage(
    rt: _Runtime, watch: _Stopwatch, question: str, target: str | None
) -> tuple[list[LabelScore], RoutingDecision]:
    t0 = time.monotonic()
    scores = await asyncio.to_thread(score_labels, rt.scorer, question)
    if target is not None:
        decision = forced_decision(scores, target)  # scores kept for display only
    else:
        decision = apply_strategy(scores, rt.config.strategy)
    watch.stage("route_ms", t0)
    return scores, decision


def _turn_payload(
    session_id: str,
    final,
    scores: list[LabelScore],
    reformulated: str,
    degraded: bool,
    timings: dict[str, int],
) -> dict:
    return {
        "session_id": session_id,
        "final": final.to_dict(),
        "router_scores": [ls.to_dict() for ls in scores],
        "reformulated_question": reformulated,
        "degraded": degraded,
        "timings": timings,
    }


def create_app(config: GatewayConfig) -> FastAPI:
    app = FastAPI(title="medroute gateway", version="0.1.0")
    # demo service without auth (see non-goals); the console may be served
    # from another origin
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    rt = _Runtime(config)
    app.state.runtime = rt

    async def run_turn(req: ChatRequest) -> JSONResponse:
        session = rt.store.get_or_create(req.session_id)
        sid = session.session_id
        async with rt.lock(sid):
            state = rt.store.get(sid) or session
            watch = _Stopwatch()

            t0 = time.monotonic()
            reformulated = await reformulate(state, req.message, config.reformulator)
            watch.stage("reformulate_ms", t0)

            scores, decision = await _route_stage(rt, watch, reformulated, req.target_specialist)

            t0 = time.monotonic()
            try:
                result = await dispatch(decision, reformulated, config.specialists)
            except UpstreamUnavailableError as exc:
                watch.stage("dispatch_ms", t0)
                return JSONResponse(
                    status_code=503,
                    content={
                        "detail": str(exc),
                        "session_id": sid,
                        "router_scores": [ls.to_dict() for ls in scores],
                        "reformulated_question": reformulated,
                        "timings": watch.finish(),
                    },
                )
            watch.stage("dispatch_ms", t0)

            t0 = time.monotonic()
            try:
                final = await synthesize(reformulated, result, decision, config.orchestrator)
            except SynthesisFailedError as exc:
                watch.stage("synthesize_ms", t0)
                return JSONResponse(
                    status_code=207,
                    content={
                        "detail": "synthesis failed; specialist contributions preserved",
                        "session_id": sid,
                        "final": None,
                        "contributions": [c.to_dict() for c in exc.contributions],
                        "router_scores": [ls.to_dict() for ls in scores],
                        "reformulated_question": reformulated,
                        "degraded": True,
                        "timings": watch.finish(),
                    },
                )
            watch.stage("synthesize_ms", t0)

            rt.store.append_turn(sid, req.message, reformulated, final)
            return JSONResponse(
                content=_turn_payload(
                    sid, final, scores, reformulated, result.degraded, watch.finish()
                )
            )

    @app.post("/v1/chat")
    async def chat(req: ChatRequest):
        _validate_chat_request(req)
        return await run_turn(req)

    def _sse(event_id: int, event: str, payload: dict) -> str:
        data = json.dumps(payload, ensure_ascii=False)
        return f"id: {event_id}\nevent: {event}\ndata: {data}\n\n"

    async def stream_turn(req: ChatRequest) -> AsyncIterator[str]:
        event_id = 0
        session = rt.store.get_or_create(req.session_id)
        sid = session.session_id
        async with rt.lock(sid):
            state = rt.store.get(sid) or session
            watch = _Stopwatch()
            try:
                t0 = time.monotonic()
                reformulated = await reformulate(state, req.message, config.reformulator)
                watch.stage("reformulate_ms", t0)
                scores, decision = await _route_stage(
                    rt, watch, reformulated, req.target_specialist
                )
                yield _sse(event_id, "routing", decision.to_dict())
                event_id += 1

                t0 = time.monotonic()
                by_id = {}
                async for response in dispatch_stream(decision, reformulated, config.specialists):
                    by_id[response.specialty.id] = response
                    yield _sse(event_id, "specialist", response.to_dict())
                    event_id += 1
                watch.stage("dispatch_ms", t0)
                ordered = tuple(by_id[ls.label.id] for ls in decision.selected)
                if not any(r.ok for r in ordered):
                    raise UpstreamUnavailableError("all dispatched specialists failed")
                result = DispatchResult(
                    responses=ordered,
                    elapsed_ms=watch.timings["dispatch_ms"],
                    degraded=any(not r.ok for r in ordered),
                )

                t0 = time.monotonic()
                final = await synthesize(reformulated, result, decision, config.orchestrator)
                watch.stage("synthesize_ms", t0)
                rt.store.append_turn(sid, req.message, reformulated, final)
                payload = _turn_payload(
                    sid, final, scores, reformulated, result.degraded, watch.finish()
                )
                yield _sse(event_id, "final", payload)
            except MedrouteError as exc:
                log.error("stream turn failed: %s", exc)
                yield _sse(event_id, "error", {"message": str(exc), "session_id": sid})

    @app.post("/v1/chat/stream")
    async def chat_stream(req: ChatRequest):
        _validate_chat_request(req)
        return StreamingResponse(
            stream_turn(req),
            media_type="text/event-stream",
            headers={"Cache-Control": "no-cache"},
        )

    @app.post("/v1/router/score")
    async def router_score(req: ScoreRequest):
        if not req.text or not req.text.strip():
            raise HTTPException(status_code=400, detail="text is empty")
        scores = await asyncio.to_thread(score_labels, rt.scorer, req.text)
        decision = apply_strategy(scores, config.strategy)
        return {
            "scores": [ls.to_dict() for ls in scores],
            "decision": decision.to_dict(),
        }

    @app.get("/v1/specialists")
    async def specialists_registry():
        return {"specialists": [lbl.to_dict() for lbl in default_label_registry()]}

    @app.get("/v1/sessions/{session_id}")
    async def session_state(session_id: str):
        state: ConversationState | None = rt.store.get(session_id)
        if state is None:
            raise HTTPException(status_code=404, detail=f"unknown session: {session_id!r}")
        return state.to_dict()

    @app.get("/healthz")
    async def healthz():
        return {"status": "ok"}

    @app.exception_handler(InvalidInputError)
    async def invalid_input_handler(_, exc: InvalidInputError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    return app
