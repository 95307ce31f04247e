"""JSON-over-HTTP chat API.

Endpoints:

* ``POST /api/session``                -> {"session_id": ...}
* ``POST /api/message``                -> the chat response (creates a
  session when no id is given)
* ``GET  /api/session/{id}/history``   -> past turns
* ``GET  /healthz``

Every chat response carries the five fields session_id, reply, bot_used,
mental_score, sentiment_score.  Internal failures still answer with a
fallback reply in a 500 body.
"""
from __future__ import annotations

import logging

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dialogue import ChatEngine
from .responder import FALLBACK_TEXT

logger = logging.getLogger(__name__)

MAX_TEXT_LEN = 2000


class MessageRequest(BaseModel):
    session_id: str | None = None
    text: str


def create_app(engine: ChatEngine, ui_dir=None) -> FastAPI:
    app = FastAPI(title="moodbot", docs_url=None, redoc_url=None)

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/api/session")
    def create_session():
        session = engine.sessions.create()
        return {"session_id": session.id}

    @app.post("/api/message")
    def post_message(req: MessageRequest):
        if not req.text or len(req.text) > MAX_TEXT_LEN:
            return JSONResponse(
                status_code=400,
                content={"error": f"text must be 1..{MAX_TEXT_LEN} characters"},
            )
        if req.session_id is None:
            session = engine.sessions.create()
        else:
            session = engine.sessions.get(req.session_id)
            if session is None:
                return JSONResponse(
                    status_code=404,
                    content={"error": f"unknown or expired session: {req.session_id}"},
                )
        try:
            turn = engine.respond(session, req.text)
        except Exception:
            logger.exception("message handling failed")
            return JSONResponse(
                status_code=500,
                content={
                    "session_id": session.id,
                    "reply": FALLBACK_TEXT,
                    "bot_used": session.active_bot,
                    "mental_score": None,
                    "sentiment_score": None,
                    "error": "internal failure; fallback reply served",
                },
            )
        return {
            "session_id": session.id,
            "reply": turn.reply_text,
            "bot_used": turn.bot_used,
            "mental_score": turn.mental_score,
            "sentiment_score": turn.sentiment_score,
        }

    @app.get("/api/session/{session_id}/history")
    def history(session_id: str):
        session = engine.sessions.get(session_id)
        if session is None:
            return JSONResponse(
                status_code=404, content={"error": f"unknown or expired session: {session_id}"}
            )
        return {
            "session_id": session.id,
            "active_bot": session.active_bot,
            "turn_count": len(session.turns),
            "turns": [
                {
                    "user_text": t.user_text,
                    "reply": t.reply_text,
                    "bot_used": t.bot_used,
                    "mental_score": t.mental_score,
                    "sentiment_score": t.sentiment_score,
                    "timestamp": t.timestamp,
                }
                for t in session.turns
            ],
        }

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
