"""HTTP API over the session engine.

Routes (all JSON unless noted):

* ``POST /sessions`` {total_duration?, variant?} -> session view
* ``GET  /sessions/{id}`` -> session view with all turns
* ``POST /sessions/{id}/turns`` {message} -> turn view
* ``GET  /sessions/{id}/turns/{k}/plan`` -> plan JSON
* ``GET  /sessions/{id}/turns/{k}/audio`` -> WAV bytes
* ``GET  /healthz``

Errors come back as problem objects ``{"code": <module error name>,
"message": ...}`` so clients can switch on stable codes. When a static
directory is configured (the web UI bundle), it is served at ``/``.
"""

from __future__ import annotations

import logging
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .audioio import encode_wav
from .errors import (
    BackendError,
    ConfigError,
    EngineError,
    NoResponse,
    NotFound,
    NotRendered,
    StoreError,
)
from .session import Session, SessionConfig, SessionEngine, Turn

logger = logging.getLogger(__name__)

_STATUS_BY_ERROR = {
    NotFound: 404,
    NotRendered: 409,
    StoreError: 500,
    BackendError: 502,
    NoResponse: 502,
    ConfigError: 400,
}


class CreateSessionBody(BaseModel):
    total_duration: float = Field(default=10.0, gt=0)
    variant: str = "standard"
    session_id: str | None = None


class TurnBody(BaseModel):
    message: str = Field(min_length=1)


def turn_view(session_id: str, turn: Turn) -> dict:
    return {
        "index": turn.index,
        "status": turn.status,
        "user_message": turn.user_message,
        "plan": turn.plan.to_json_dict() if turn.plan is not None else None,
        "audio_url": (
            f"/sessions/{session_id}/turns/{turn.index}/audio" if turn.has_audio else None
        ),
        "created_at": turn.created_at,
    }


def session_view(session: Session) -> dict:
    return {
        "id": session.id,
        "total_duration": session.config.total_duration,
        "sample_rate": session.config.sample_rate,
        "variant": session.config.template_variant,
        "turns": [turn_view(session.id, t) for t in session.turns],
    }


def create_app(engine: SessionEngine, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="planmix", docs_url=None, redoc_url=None)

    @app.exception_handler(EngineError)
    async def engine_error_handler(request: Request, exc: EngineError):
        status = 500
        for error_type, code in _STATUS_BY_ERROR.items():
            if isinstance(exc, error_type):
                status = code
                break
        return JSONResponse(
            status_code=status, content={"code": exc.code, "message": str(exc)}
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    def create_session(body: CreateSessionBody):
        config = SessionConfig(
            total_duration=body.total_duration, template_variant=body.variant
        )
        session = engine.create_session(config, session_id=body.session_id)
        return session_view(session)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return session_view(engine.store.load_session(session_id))

    @app.post("/sessions/{session_id}/turns")
    def post_turn(session_id: str, body: TurnBody):
        turn = engine.take_turn(session_id, body.message)
        return turn_view(session_id, turn)

    @app.get("/sessions/{session_id}/turns/{index}/plan")
    def get_plan(session_id: str, index: int):
        turn = engine.get_turn(session_id, index)
        if turn.plan is None:
            raise NotRendered(f"turn {index} has no plan")
        return turn.plan.to_json_dict()

    @app.get("/sessions/{session_id}/turns/{index}/audio")
    def get_audio(session_id: str, index: int):
        clip = engine.get_turn_audio(session_id, index)
        return Response(content=encode_wav(clip), media_type="audio/wav")

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")

    return app
