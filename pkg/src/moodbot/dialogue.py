"""Per-session orchestration: routing cascade, trend switching, and Q&A logging.

Every incoming message is scored by both classifiers.  The per-message route:
below the mental threshold the casual bot answers; at or above it, a positive
sentiment also falls back to casual, and only a negative one engages the
counseling bot.  Independently, once five scores have accumulated, their
moving averages can force one bot until the opposite trend appears; a forced
bot overrides per-message routing.

Every turn is appended to the knowledge store, which replays into the '.conv'
training format for future retraining.
"""
from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TextIO

from .classifier import ClassifierModel, predict
from .corpus import Conversation, write_conv_file
from .errors import InvalidInputError
from .responder import (
    FALLBACK_TEXT,
    DecodeConfig,
    LanguageModel,
    Seq2SeqModel,
    generate_detailed,
)

logger = logging.getLogger(__name__)

CASUAL = "casual"
COUNSELING = "counseling"

SESSION_TTL_SECONDS = 24 * 3600


@dataclass
class RoutingConfig:
    """Thresholds and window of the routing state machine (all overridable)."""

    mental_threshold: float = 0.5
    sentiment_threshold: float = 0.5
    trend_window: int = 5
    trend_warmup: int = 5


def route_message(
    mental_score: float,
    sentiment_score: float,
    cfg: RoutingConfig | None = None,
) -> str:
    """Per-message routing cascade on the two classifier scores."""
    cfg = cfg or RoutingConfig()
    for name, score in (("mental", mental_score), ("sentiment", sentiment_score)):
        if not 0.0 <= score <= 1.0:
            raise InvalidInputError(f"{name} score {score} outside [0, 1]")
    if mental_score < cfg.mental_threshold:
        return CASUAL
    if sentiment_score >= cfg.sentiment_threshold:
        return CASUAL
    return COUNSELING


@dataclass
class Turn:
    user_text: str
    reply_text: str
    mental_score: float
    sentiment_score: float
    bot_used: str
    route: str                      # "message" or "trend" decision record
    fallback: bool = False
    error: str | None = None
    timestamp: float = 0.0


@dataclass
class Session:
    id: str
    turns: list[Turn] = field(default_factory=list)
    mental_buf: list[float] = field(default_factory=list)
    sent_buf: list[float] = field(default_factory=list)
    active_bot: str = CASUAL
    trend_override: str | None = None
    created_at: float = 0.0
    updated_at: float = 0.0

    def push_scores(self, mental: float, sentiment: float, window: int) -> None:
        self.mental_buf = (self.mental_buf + [mental])[-window:]
        self.sent_buf = (self.sent_buf + [sentiment])[-window:]

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "turns": [asdict(t) for t in self.turns],
            "mental_buf": self.mental_buf,
            "sent_buf": self.sent_buf,
            "active_bot": self.active_bot,
            "trend_override": self.trend_override,
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Session":
        return cls(
            id=doc["id"],
            turns=[Turn(**t) for t in doc["turns"]],
            mental_buf=list(doc["mental_buf"]),
            sent_buf=list(doc["sent_buf"]),
            active_bot=doc["active_bot"],
            trend_override=doc.get("trend_override"),
            created_at=doc["created_at"],
            updated_at=doc["updated_at"],
        )


def update_trend(session: Session, cfg: RoutingConfig | None = None) -> str | None:
    """Re-evaluate the moving-average override after a turn's scores landed.

    No effect until both buffers hold `trend_warmup` scores; afterwards a
    negative-mental trend forces the counseling bot and the complementary
    condition forces casual.  The override sticks until the opposite trend.
    """
    cfg = cfg or RoutingConfig()
    if len(session.mental_buf) < cfg.trend_warmup or len(session.sent_buf) < cfg.trend_warmup:
        return None
    mental_mean = sum(session.mental_buf) / len(session.mental_buf)
    sent_mean = sum(session.sent_buf) / len(session.sent_buf)
    if mental_mean >= cfg.mental_threshold and sent_mean < cfg.sentiment_threshold:
        session.trend_override = COUNSELING
    elif sent_mean >= cfg.sentiment_threshold or mental_mean < cfg.mental_threshold:
        session.trend_override = CASUAL
    return session.trend_override


class KnowledgeStore:
    """Append-only newline-delimited JSON log of every Q&A exchange."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: dict) -> None:
        line = json.dumps(record, ensure_ascii=False, sort_keys=True)
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def records(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def __len__(self) -> int:
        return len(self.records())

    def export_conv(self, stream: TextIO) -> int:
        """Replay the log as '.conv' records: one conversation per session,
        question/answer lines interleaved in arrival order."""
        by_session: dict[str, list[str]] = {}
        order: list[str] = []
        for rec in self.records():
            sid = rec["session_id"]
            if sid not in by_session:
                by_session[sid] = []
                order.append(sid)
            by_session[sid].extend([rec["question"], rec["answer"]])
        convs = [Conversation(by_session[sid]) for sid in order]
        return write_conv_file(convs, stream)


def log_pair(store: KnowledgeStore, session: Session, turn: Turn) -> bool:
    """Durably append one exchange; one retry, then the failure is surfaced
    on the turn without losing the reply."""
    record = {
        "session_id": session.id,
        "question": turn.user_text,
        "answer": turn.reply_text,
        "mental_score": turn.mental_score,
        "sentiment_score": turn.sentiment_score,
        "bot_used": turn.bot_used,
        "timestamp": turn.timestamp,
    }
    for attempt in (1, 2):
        try:
            store.append(record)
            return True
        except OSError as exc:
            logger.warning("knowledge store append failed (attempt %d): %s", attempt, exc)
            last = exc
    turn.error = f"knowledge store append failed: {last}"
    return False


class SessionManager:
    """In-memory sessions with optional on-disk persistence and idle expiry."""

    def __init__(
        self,
        state_dir: str | Path | None = None,
        ttl_seconds: float = SESSION_TTL_SECONDS,
        clock=time.time,
    ):
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
        self.ttl = ttl_seconds
        self.clock = clock
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    def _path(self, sid: str) -> Path | None:
        return self.state_dir / f"{sid}.json" if self.state_dir else None

    def create(self) -> Session:
        now = self.clock()
        session = Session(id=uuid.uuid4().hex, created_at=now, updated_at=now)
        with self._registry_lock:
            self._sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self.persist(session)
        return session

    def get(self, sid: str) -> Session | None:
        with self._registry_lock:
            session = self._sessions.get(sid)
        if session is None and self.state_dir:
            path = self._path(sid)
            if path and path.exists():
                session = Session.from_json(json.loads(path.read_text(encoding="utf-8")))
                with self._registry_lock:
                    self._sessions[sid] = session
                    self._locks.setdefault(sid, threading.Lock())
        if session is None:
            return None
        if self.clock() - session.updated_at > self.ttl:
            self.drop(sid)
            return None
        return session

    def drop(self, sid: str) -> None:
        with self._registry_lock:
            self._sessions.pop(sid, None)
            self._locks.pop(sid, None)
        path = self._path(sid)
        if path and path.exists():
            path.unlink()

    def lock(self, sid: str) -> threading.Lock:
        with self._registry_lock:
            return self._locks.setdefault(sid, threading.Lock())

    def persist(self, session: Session) -> None:
        path = self._path(session.id)
        if path:
            path.write_text(
                json.dumps(session.to_json(), ensure_ascii=False), encoding="utf-8"
            )

    def ids(self) -> list[str]:
        with self._registry_lock:
            return list(self._sessions)


@dataclass
class ModelBundle:
    """Everything the engine needs to answer one message."""

    sentiment: ClassifierModel
    relatedness: ClassifierModel
    casual: Seq2SeqModel
    counseling: Seq2SeqModel
    lm: LanguageModel | None = None
    decode: DecodeConfig = field(default_factory=DecodeConfig)


class ChatEngine:
    """Session-aware chat: scores, routes, generates, logs."""

    def __init__(
        self,
        bundle: ModelBundle,
        store: KnowledgeStore,
        sessions: SessionManager | None = None,
        routing: RoutingConfig | None = None,
        clock=time.time,
    ):
        self.bundle = bundle
        self.store = store
        self.sessions = sessions or SessionManager()
        self.routing = routing or RoutingConfig()
        self.clock = clock

    def respond(self, session: Session, user_text: str) -> Turn:
        with self.sessions.lock(session.id):
            return self._respond_locked(session, user_text)

    def _respond_locked(self, session: Session, user_text: str) -> Turn:
        mental = predict(self.bundle.relatedness, user_text)
        sentiment = predict(self.bundle.sentiment, user_text)

        if session.trend_override is not None:
            bot = session.trend_override
            route = "trend"
        else:
            bot = route_message(mental.score, sentiment.score, self.routing)
            route = "message"

        model = self.bundle.counseling if bot == COUNSELING else self.bundle.casual
        fallback = False
        error = None
        try:
            result = generate_detailed(model, self.bundle.lm, user_text, self.bundle.decode)
            reply, fallback = result.text, result.fallback
        except Exception as exc:  # a live chat must always answer
            logger.exception("responder failed; serving fallback reply")
            reply, fallback, error = FALLBACK_TEXT, True, repr(exc)

        turn = Turn(
            user_text=user_text,
            reply_text=reply,
            mental_score=mental.score,
            sentiment_score=sentiment.score,
            bot_used=bot,
            route=route,
            fallback=fallback,
            error=error,
            timestamp=self.clock(),
        )
        session.turns.append(turn)
        session.active_bot = bot
        session.push_scores(mental.score, sentiment.score, self.routing.trend_window)
        update_trend(session, self.routing)
        session.updated_at = turn.timestamp
        log_pair(self.store, session, turn)
        self.sessions.persist(session)
        return turn
