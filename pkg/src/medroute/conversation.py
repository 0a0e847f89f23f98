"""Multi-turn session state and context-aware question reformulation.

Follow-up questions are rewritten into standalone queries using the recent
turn history so the router and specialists see self-contained text. Session
state is append-only; the store serializes writers per session and keeps an
optional JSON snapshot per session on disk.
"""

from __future__ import annotations

import json
import logging
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .core import FinalAnswer
from .errors import ConfigurationError, InvalidInputError, MedrouteError
from .model_client import ChatMessage, CompletionRequest, complete

log = logging.getLogger(__name__)

DEFAULT_REFORMULATION_TEMPLATE = (
    "You rewrite the user's next question from an ongoing conversation into "
    "a single fully self-contained question. Resolve pronouns and implicit "
    "references using the conversation, preserve the user's language and "
    "intent, and reply with the rewritten question only."
)


@dataclass(frozen=True)
class ReformulatorConfig:
    endpoint: str
    model_id: str
    history_window: int = 6  # max prior turns in the rewrite prompt
    timeout_ms: int = 20_000
    max_tokens: int = 256
    temperature: float = 0.0
    api_token: str | None = None

    def __post_init__(self):
        if self.history_window < 1:
            raise ConfigurationError("history_window must be >= 1")
        if self.timeout_ms <= 0:
            raise ConfigurationError("timeout_ms must be positive")


@dataclass(frozen=True)
class Turn:
    user_question: str
    reformulated_question: str
    answer: FinalAnswer

    def to_dict(self) -> dict:
        return {
            "user_question": self.user_question,
            "reformulated_question": self.reformulated_question,
            "answer": self.answer.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Turn":
        return cls(
            user_question=d["user_question"],
            reformulated_question=d["reformulated_question"],
            answer=FinalAnswer.from_dict(d["answer"]),
        )


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class ConversationState:
    """One session's append-only turn history."""

    session_id: str
    turns: tuple[Turn, ...] = ()
    created_at: str = field(default_factory=_now_iso)
    updated_at: str = field(default_factory=_now_iso)

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "turns": [t.to_dict() for t in self.turns],
            "created_at": self.created_at,
            "updated_at": self.updated_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConversationState":
        return cls(
            session_id=d["session_id"],
            turns=tuple(Turn.from_dict(t) for t in d["turns"]),
            created_at=d["created_at"],
            updated_at=d["updated_at"],
        )


def append_turn(
    state: ConversationState, question: str, reformulated: str, answer: FinalAnswer
) -> ConversationState:
    """Pure append: returns a new state with one more turn, prior turns untouched."""
    turn = Turn(user_question=question, reformulated_question=reformulated, answer=answer)
    return ConversationState(
        session_id=state.session_id,
        turns=state.turns + (turn,),
        created_at=state.created_at,
        updated_at=_now_iso(),
    )


async def reformulate(
    state: ConversationState, question: str, config: ReformulatorConfig
) -> str:
    """Rewrite a follow-up into a standalone query using recent history.

    A first turn passes through unchanged with no model call. A failed
    reformulator degrades to the original question (availability over
    fidelity for a chat demo); the fallback is logged, never fatal.
    """
    if not question.strip():
        raise InvalidInputError("question is empty")
    if not state.turns:
        return question
    messages = [ChatMessage(role="system", content=DEFAULT_REFORMULATION_TEMPLATE)]
    for turn in state.turns[-config.history_window:]:
        messages.append(ChatMessage(role="user", content=turn.user_question))
        messages.append(ChatMessage(role="assistant", content=turn.answer.text))
    messages.append(ChatMessage(role="user", content=question))
    request = CompletionRequest(
        model_id=config.model_id,
        messages=tuple(messages),
        max_tokens=config.max_tokens,
        temperature=config.temperature,
    )
    try:
        rewritten = await complete(
            config.endpoint,
            request,
            timeout_ms=config.timeout_ms,
            api_token=config.api_token,
        )
    except MedrouteError as exc:
        log.warning("reformulator degraded to passthrough: %s", exc)
        return question
    return rewritten.strip() or question


class SessionStore:
    """In-memory session map with per-session JSON snapshots when state_dir is set.

    Mutations are serialized store-wide; per-session request queueing on top
    of this lives in the gateway.
    """

    def __init__(self, state_dir: str | Path | None = None):
        self._sessions: dict[str, ConversationState] = {}
        self._lock = threading.Lock()
        self._state_dir = Path(state_dir) if state_dir else None
        if self._state_dir:
            self._state_dir.mkdir(parents=True, exist_ok=True)

    def _snapshot_path(self, session_id: str) -> Path | None:
        if not self._state_dir:
            return None
        return self._state_dir / f"{session_id}.json"

    def _persist(self, state: ConversationState) -> None:
        path = self._snapshot_path(state.session_id)
        if not path:
            return
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(state.to_dict(), ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)

    def _load_snapshot(self, session_id: str) -> ConversationState | None:
        path = self._snapshot_path(session_id)
        if not path or not path.exists():
            return None
        try:
            return ConversationState.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (ValueError, KeyError) as exc:
            log.warning("discarding unreadable session snapshot %s: %s", path, exc)
            return None

    def get(self, session_id: str) -> ConversationState | None:
        with self._lock:
            state = self._sessions.get(session_id)
            if state is None:
                state = self._load_snapshot(session_id)
                if state is not None:
                    self._sessions[session_id] = state
            return state

    def get_or_create(self, session_id: str | None = None) -> ConversationState:
        """Existing state for a known id; a fresh state under a new unique id
        when the id is absent or unknown."""
        if session_id:
            state = self.get(session_id)
            if state is not None:
                return state
        with self._lock:
            state = ConversationState(session_id=uuid.uuid4().hex)
            self._sessions[state.session_id] = state
            return state

    def append_turn(
        self, session_id: str, question: str, reformulated: str, answer: FinalAnswer
    ) -> ConversationState:
        with self._lock:
            state = self._sessions.get(session_id)
            if state is None:
                raise InvalidInputError(f"unknown session: {session_id!r}")
            state = append_turn(state, question, reformulated, answer)
            self._sessions[session_id] = state
            self._persist(state)
            return state

    def session_ids(self) -> list[str]:
        with self._lock:
            return list(self._sessions)


def get_or_create_session(store: SessionStore, session_id: str | None = None) -> ConversationState:
    return store.get_or_create(session_id)
