"""The daemon: sessions, wire protocol, persistence, and suggestion pushes.

Messages are newline-delimited JSON objects over a local socket. Every
request gets exactly one reply (``ok``/``hello_ok`` or ``error``); state
changes additionally emit pushes (``scrapbook_state_push``,
``suggestions_push``). Suggestion pushes carry an invocation sequence number
so the UI can discard stale results. Session state persists after every
acknowledged mutation, so a restart reconstructs scrapbook, examples, form
snapshot, and options exactly.
"""

from __future__ import annotations

import json
import os
import socket
import socketserver
import threading
import uuid
from dataclasses import dataclass, field

import jsonschema

from . import form_model
from .context_store import ContextStore
from .errors import (
    CorruptStoreError,
    DuplicateFieldError,
    EmptyTextError,
    EntryNotFoundError,
    FieldNotFoundError,
    FormfillError,
    IncompleteExampleError,
    InvalidSelectionError,
    InvocationError,
    OverBudgetError,
    ProtocolError,
    TranscriptMissError,
    TransportError,
)
from .form_model import FormSnapshot
from .llm_gateway import Backend
from .prompt_builder import PromptConfig
from .suggestion_engine import CompletionCache, SuggestionEngine

SESSION_SCHEMA_VERSION = 1

_FIELDS_ITEM_SCHEMA = {
    "type": "object",
    "properties": {
        "field_id": {"type": "string"},
        "name": {"type": "string"},
        "value": {"type": "string"},
    },
    "required": ["field_id", "name", "value"],
    "additionalProperties": False,
}

_OPTIONS_SCHEMA = {
    "type": "object",
    "properties": {
        "auto_invoke_on_context_change": {"type": "boolean"},
        "auto_invoke_on_field_change": {"type": "boolean"},
        "auto_save_examples": {"type": "boolean"},
    },
    "additionalProperties": False,
}


def _message_schema(properties: dict, required: list[str]) -> dict:
    base = {
        "type": {"type": "string"},
        "id": {"type": ["string", "integer"]},
        "session": {"type": "string"},
    }
    base.update(properties)
    return {
        "type": "object",
        "properties": base,
        "required": ["type"] + required,
        "additionalProperties": False,
    }


MESSAGE_SCHEMAS: dict[str, dict] = {
    "hello": _message_schema({"site_key": {"type": "string"}}, ["site_key"]),
    "sync_form": _message_schema(
        {
            "site_key": {"type": "string"},
            "fields": {"type": "array", "items": _FIELDS_ITEM_SCHEMA},
            "navigation": {"type": "boolean"},
        },
        ["session", "fields"],
    ),
    "field_updated": _message_schema(
        {
            "field_id": {"type": "string"},
            "value": {"type": "string"},
            "provenance": {"type": "string", "enum": ["user", "suggestion_accepted"]},
        },
        ["session", "field_id", "value"],
    ),
    "add_selection": _message_schema(
        {
            "page_title": {"type": "string"},
            "document_text": {"type": "string"},
            "sel_start": {"type": "integer"},
            "sel_end": {"type": "integer"},
        },
        ["session", "page_title", "document_text", "sel_start", "sel_end"],
    ),
    "add_manual": _message_schema({"text": {"type": "string"}}, ["session", "text"]),
    "add_search": _message_schema({"query": {"type": "string"}}, ["session", "query"]),
    "delete_entry": _message_schema({"entry_id": {"type": "string"}}, ["session", "entry_id"]),
    "invoke": _message_schema({}, ["session"]),
    "save_example": _message_schema({}, ["session"]),
    "auto_save_trigger": _message_schema(
        {"event": {"type": "string", "enum": ["form_submission", "save_button_click"]}},
        ["session", "event"],
    ),
    "set_options": _message_schema({"options": _OPTIONS_SCHEMA}, ["session", "options"]),
}

_ERROR_CODES = {
    EntryNotFoundError: "not_found",
    FieldNotFoundError: "not_found",
    InvalidSelectionError: "invalid_selection",
    EmptyTextError: "empty_text",
    IncompleteExampleError: "incomplete_example",
    DuplicateFieldError: "duplicate_field",
    OverBudgetError: "over_budget",
    InvocationError: "invocation_failed",
    TranscriptMissError: "transcript_miss",
    TransportError: "transport_error",
    CorruptStoreError: "corrupt_store",
}


@dataclass
class SessionOptions:
    auto_invoke_on_context_change: bool = False
    auto_invoke_on_field_change: bool = False
    auto_save_examples: bool = False

    def to_dict(self) -> dict:
        return {
            "auto_invoke_on_context_change": self.auto_invoke_on_context_change,
            "auto_invoke_on_field_change": self.auto_invoke_on_field_change,
            "auto_save_examples": self.auto_save_examples,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionOptions":
        return cls(**data)


@dataclass
class Session:
    """One browser tab's context: bag, active form snapshot, and options."""

    session_id: str
    site_key: str
    store: ContextStore = field(default_factory=ContextStore)
    snapshot: FormSnapshot | None = None
    options: SessionOptions = field(default_factory=SessionOptions)
    invocation_seq: int = 0
    last_auto_saved_epoch: int = 0  # 0 = no auto-save yet; debounces by epoch
    # accepted suggestions are edits like any other, but the provenance is
    # kept here for harness analysis
    edit_log: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema": SESSION_SCHEMA_VERSION,
            "session_id": self.session_id,
            "site_key": self.site_key,
            "store": self.store.to_dict(),
            "snapshot": self.snapshot.to_dict() if self.snapshot else None,
            "options": self.options.to_dict(),
            "invocation_seq": self.invocation_seq,
            "last_auto_saved_epoch": self.last_auto_saved_epoch,
            "edit_log": list(self.edit_log),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Session":
        if data.get("schema") != SESSION_SCHEMA_VERSION:
            raise CorruptStoreError(f"unsupported session schema: {data.get('schema')!r}")
        return cls(
            session_id=data["session_id"],
            site_key=data["site_key"],
            store=ContextStore.from_dict(data["store"]),
            snapshot=FormSnapshot.from_dict(data["snapshot"]) if data["snapshot"] else None,
            options=SessionOptions.from_dict(data["options"]),
            invocation_seq=data["invocation_seq"],
            last_auto_saved_epoch=data["last_auto_saved_epoch"],
            edit_log=list(data["edit_log"]),
        )


class SessionService:
    """Protocol dispatcher; the transport layer feeds it one message at a time.

    Per-session mutations are serialized by a session lock; independent
    sessions proceed concurrently. Returns the reply followed by any pushes.
    """

    def __init__(
        self,
        state_dir: str,
        backend: Backend,
        prompt_config: PromptConfig | None = None,
    ):
        self.state_dir = state_dir
        self.backend = backend
        self.prompt_config = prompt_config if prompt_config is not None else PromptConfig()
        self.sessions: dict[str, Session] = {}
        self._engines: dict[str, SuggestionEngine] = {}
        self._locks: dict[str, threading.RLock] = {}
        self._registry_lock = threading.Lock()
        os.makedirs(os.path.join(state_dir, "sessions"), exist_ok=True)
        os.makedirs(os.path.join(state_dir, "cache"), exist_ok=True)

    # -- persistence --------------------------------------------------------

    def _session_path(self, session_id: str) -> str:
        return os.path.join(self.state_dir, "sessions", f"{session_id}.json")

    def _cache_path(self, session_id: str) -> str:
        return os.path.join(self.state_dir, "cache", f"{session_id}.json")

    def _persist(self, session: Session) -> None:
        path = self._session_path(session.session_id)
        doc = json.dumps(session.to_dict(), indent=1, ensure_ascii=False) + "\n"
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            f.write(doc)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)

    def _load_session(self, session_id: str) -> Session | None:
        path = self._session_path(session_id)
        if not os.path.exists(path):
            return None
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise CorruptStoreError(f"session file {path!r} is not intact: {exc}") from exc
        return Session.from_dict(data)

    def _engine(self, session_id: str) -> SuggestionEngine:
        with self._registry_lock:
            engine = self._engines.get(session_id)
            if engine is None:
                engine = SuggestionEngine(
                    backend=self.backend,
                    config=self.prompt_config,
                    cache=CompletionCache(self._cache_path(session_id)),
                )
                self._engines[session_id] = engine
            return engine

    def _lock_for(self, session_id: str) -> threading.RLock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.RLock())

    # -- dispatch ------------------------------------------------------------

    def handle_message(self, msg: dict) -> list[dict]:
        """Dispatch one protocol message; never raises, never kills a session."""
        msg_id = msg.get("id") if isinstance(msg, dict) else None
        try:
            if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
                raise ProtocolError("invalid_message", "message must be an object with a type")
            msg_type = msg["type"]
            schema = MESSAGE_SCHEMAS.get(msg_type)
            if schema is None:
                raise ProtocolError("unknown_message_type", f"unknown message type {msg_type!r}")
            try:
                jsonschema.validate(msg, schema)
            except jsonschema.ValidationError as exc:
                raise ProtocolError("invalid_message", exc.message)

            if msg_type == "hello":
                return self._handle_hello(msg)
            session = self.sessions.get(msg["session"])
            if session is None:
                raise ProtocolError("unknown_session", f"no session {msg['session']!r}")
            with self._lock_for(session.session_id):
                handler = getattr(self, f"_handle_{msg_type}")
                return handler(session, msg)
        except ProtocolError as exc:
            return [self._error(msg_id, exc.code, exc.detail)]
        except FormfillError as exc:
            code = _ERROR_CODES.get(type(exc), "engine_error")
            return [self._error(msg_id, code, str(exc))]

    @staticmethod
    def _error(msg_id, code: str, detail: str) -> dict:
        reply = {"type": "error", "code": code, "detail": detail}
        if msg_id is not None:
            reply["re"] = msg_id
        return reply

    @staticmethod
    def _ok(msg, **result) -> dict:
        reply = {"type": "ok"}
        if msg.get("id") is not None:
            reply["re"] = msg["id"]
        reply.update(result)
        return reply

    def _scrapbook_push(self, session: Session) -> dict:
        return {
            "type": "scrapbook_state_push",
            "session": session.session_id,
            "entries": [e.to_dict() for e in session.store.bag.scrapbook],
        }

    # -- handlers ------------------------------------------------------------

    def _handle_hello(self, msg: dict) -> list[dict]:
        session_id = msg.get("session") or f"sess-{uuid.uuid4().hex[:12]}"
        session = self.sessions.get(session_id)
        if session is None:
            session = self._load_session(session_id)
        if session is None:
            session = Session(session_id=session_id, site_key=msg["site_key"])
            self._persist(session)
        self.sessions[session_id] = session
        reply = {
            "type": "hello_ok",
            "session": session_id,
            "site_key": session.site_key,
            "options": session.options.to_dict(),
            "scrapbook": [e.to_dict() for e in session.store.bag.scrapbook],
        }
        if msg.get("id") is not None:
            reply["re"] = msg["id"]
        return [reply]

    def _handle_sync_form(self, session: Session, msg: dict) -> list[dict]:
        fields = [(f["field_id"], f["name"], f["value"]) for f in msg["fields"]]
        site_key = msg.get("site_key", session.site_key)
        session.snapshot = form_model.sync_structure(
            session.snapshot,
            site_key,
            fields,
            force_rebaseline=bool(msg.get("navigation")),
        )
        self._persist(session)
        return [
            self._ok(
                msg,
                baseline_epoch=session.snapshot.baseline_epoch,
                field_count=len(session.snapshot.fields),
            )
        ]

    def _handle_field_updated(self, session: Session, msg: dict) -> list[dict]:
        if session.snapshot is None:
            raise ProtocolError("no_form", "no form synced for this session")
        form_model.apply_update(session.snapshot, msg["field_id"], msg["value"])
        session.edit_log.append(
            {
                "field_id": msg["field_id"],
                "provenance": msg.get("provenance", "user"),
                "baseline_epoch": session.snapshot.baseline_epoch,
                "seq": session.snapshot.updates[-1].seq,
            }
        )
        self._persist(session)
        replies = [self._ok(msg)]
        if session.options.auto_invoke_on_field_change:
            replies.extend(self._run_invocation(session))
        return replies

    def _handle_add_selection(self, session: Session, msg: dict) -> list[dict]:
        session.store.add_selection(
            msg["page_title"], msg["document_text"], msg["sel_start"], msg["sel_end"]
        )
        return self._after_context_change(session, msg)

    def _handle_add_manual(self, session: Session, msg: dict) -> list[dict]:
        session.store.add_manual(msg["text"])
        return self._after_context_change(session, msg)

    def _handle_add_search(self, session: Session, msg: dict) -> list[dict]:
        session.store.add_search(msg["query"])
        return self._after_context_change(session, msg)

    def _handle_delete_entry(self, session: Session, msg: dict) -> list[dict]:
        session.store.delete_entry(msg["entry_id"])
        return self._after_context_change(session, msg)

    def _after_context_change(self, session: Session, msg: dict) -> list[dict]:
        self._persist(session)
        replies = [self._ok(msg), self._scrapbook_push(session)]
        if (
            session.options.auto_invoke_on_context_change
            and session.snapshot is not None
            and session.snapshot.fields
        ):
            replies.extend(self._run_invocation(session))
        return replies

    def _handle_invoke(self, session: Session, msg: dict) -> list[dict]:
        if session.snapshot is None or not session.snapshot.fields:
            raise ProtocolError("no_form", "no form with fields synced for this session")
        pushes = self._run_invocation(session)
        seq = session.invocation_seq
        return [self._ok(msg, invocation_seq=seq)] + pushes

    def _run_invocation(self, session: Session) -> list[dict]:
        assert session.snapshot is not None
        session.invocation_seq += 1
        seq = session.invocation_seq
        self._persist(session)
        engine = self._engine(session.session_id)
        suggestions = engine.invoke(session.store.bag, session.snapshot, invocation_seq=seq)
        if session.invocation_seq != seq:
            return []  # superseded by a newer invocation; drop the stale result
        return [
            {
                "type": "suggestions_push",
                "session": session.session_id,
                "invocation_seq": seq,
                "suggestions": suggestions.to_dict(),
            }
        ]

    def _save_current_example(self, session: Session) -> dict:
        if session.snapshot is None:
            raise ProtocolError("no_form", "no form synced for this session")
        example = session.store.save_example(
            session.snapshot, session.snapshot.current_values()
        )
        self._persist(session)
        return {"example_id": example.example_id}

    def _handle_save_example(self, session: Session, msg: dict) -> list[dict]:
        result = self._save_current_example(session)
        return [self._ok(msg, **result), self._scrapbook_push(session)]

    def _handle_auto_save_trigger(self, session: Session, msg: dict) -> list[dict]:
        if not session.options.auto_save_examples:
            return [self._ok(msg, saved=False)]
        if session.snapshot is None:
            raise ProtocolError("no_form", "no form synced for this session")
        epoch = session.snapshot.baseline_epoch
        if epoch == session.last_auto_saved_epoch:
            return [self._ok(msg, saved=False)]  # debounce: one example per epoch
        result = self._save_current_example(session)
        session.last_auto_saved_epoch = epoch
        self._persist(session)
        return [self._ok(msg, saved=True, **result), self._scrapbook_push(session)]

    def _handle_set_options(self, session: Session, msg: dict) -> list[dict]:
        for key, value in msg["options"].items():
            setattr(session.options, key, value)
        self._persist(session)
        return [self._ok(msg, options=session.options.to_dict())]


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self):
        service: SessionService = self.server.service  # type: ignore[attr-defined]
        while True:
            line = self.rfile.readline()
            if not line:
                return
            text = line.decode("utf-8", errors="replace").strip()
            if not text:
                continue
            try:
                msg = json.loads(text)
            except json.JSONDecodeError as exc:
                replies = [
                    {"type": "error", "code": "bad_json", "detail": f"unparseable line: {exc}"}
                ]
            else:
                replies = service.handle_message(msg)
            for reply in replies:
                data = json.dumps(reply, ensure_ascii=False) + "\n"
                try:
                    self.wfile.write(data.encode("utf-8"))
                except (BrokenPipeError, ConnectionResetError):
                    return


class SessionServer(socketserver.ThreadingTCPServer):
    """Line-delimited JSON protocol server bound to a local address."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service: SessionService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _LineHandler)
        self.service = service

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.socket.getsockname()[:2]
        return host, port


def serve(service: SessionService, host: str, port: int) -> None:
    """Run the daemon until interrupted."""
    with SessionServer(service, host, port) as server:
        bound_host, bound_port = server.address
        print(f"listening on {bound_host}:{bound_port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass


class ProtocolClient:
    """Minimal line-protocol client for tests and scripting."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._file = self._sock.makefile("rwb")
        self.latest_invocation_seq = 0

    def send(self, msg: dict) -> dict:
        self._file.write((json.dumps(msg, ensure_ascii=False) + "\n").encode("utf-8"))
        self._file.flush()
        return self.read()

    def read(self) -> dict:
        line = self._file.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return json.loads(line.decode("utf-8"))

    def accept_push(self, push: dict) -> bool:
        """Protocol staleness contract: drop pushes older than the newest seen."""
        if push.get("type") != "suggestions_push":
            return True
        seq = push["invocation_seq"]
        if seq < self.latest_invocation_seq:
            return False
        self.latest_invocation_seq = seq
        return True

    def close(self) -> None:
        self._file.close()
        self._sock.close()
