"""Uniform chat-completion interface with interchangeable backends.

Three backends share one ``complete(request) -> str`` surface: a remote API
client speaking the standard chat wire format, a scripted backend replaying
a recorded transcript by request digest, and a rule-based oracle that
answers from machine-readable harness fixtures. Every request runs at
temperature 0.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Callable, Protocol

import requests

from .errors import AuthError, FormfillError, TranscriptMissError, TransportError
from .prompt_builder import ChatMessage, ChatPrompt

TEMPERATURE = 0.0

TRANSCRIPT_SCHEMA_VERSION = 1

API_KEY_ENV = "FORMFILL_API_KEY"

BACKEND_KINDS = ("remote_api", "scripted", "oracle")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    messages: tuple[ChatMessage, ...]
    max_completion_tokens: int
    temperature: float = TEMPERATURE

    def __post_init__(self):
        if self.temperature != TEMPERATURE:
            raise FormfillError("completion requests are pinned to temperature 0")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "messages": [m.to_dict() for m in self.messages],
            "max_completion_tokens": self.max_completion_tokens,
            "temperature": self.temperature,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ChatRequest":
        return cls(
            model=data["model"],
            messages=tuple(ChatMessage.from_dict(m) for m in data["messages"]),
            max_completion_tokens=data["max_completion_tokens"],
            temperature=data["temperature"],
        )

    @classmethod
    def for_prompt(cls, prompt: ChatPrompt, max_completion_tokens: int) -> "ChatRequest":
        return cls(
            model=prompt.model.name,
            messages=prompt.messages,
            max_completion_tokens=max_completion_tokens,
        )


def request_digest(request: ChatRequest) -> str:
    """Stable digest over the serialized messages, model name, and temperature.

    Equal prompts hash equal; any byte difference changes the digest.
    """
    payload = json.dumps(
        {
            "model": request.model,
            "temperature": request.temperature,
            "messages": [m.to_dict() for m in request.messages],
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class Backend(Protocol):
    kind: str

    def complete(self, request: ChatRequest) -> str: ...


class RemoteApiBackend:
    """Authenticated chat-completion client over the standard wire format.

    The endpoint and model names come from configuration; the API key from
    the ``FORMFILL_API_KEY`` environment variable (overridable for tests).
    One configurable retry on transport failures, never on auth failures.
    """

    kind = "remote_api"

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        retries: int = 1,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        self.timeout = timeout
        self.retries = retries
        self._session = session or requests.Session()

    def complete(self, request: ChatRequest) -> str:
        payload = {
            "model": request.model,
            "messages": [m.to_dict() for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_completion_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        url = f"{self.endpoint}/chat/completions"
        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = TransportError(f"completion request failed: {exc}")
                continue
            if response.status_code in (401, 403):
                raise AuthError(f"completion API rejected credentials ({response.status_code})")
            if response.status_code >= 400:
                last_error = TransportError(
                    f"completion API returned {response.status_code}: {response.text[:200]}"
                )
                continue
            try:
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion API response: {exc}") from exc
        assert last_error is not None
        raise last_error


@dataclass
class Transcript:
    """Recorded (digest, request, response) triples, replayable byte-exactly."""

    entries: list[dict] = field(default_factory=list)

    def append(self, request: ChatRequest, response: str) -> None:
        self.entries.append(
            {
                "digest": request_digest(request),
                "request": request.to_dict(),
                "response": response,
            }
        )

    def response_for(self, digest: str) -> str | None:
        for entry in self.entries:
            if entry["digest"] == digest:
                return entry["response"]
        return None

    def to_dict(self) -> dict:
        return {"schema": TRANSCRIPT_SCHEMA_VERSION, "entries": self.entries}

    @classmethod
    def from_dict(cls, data: dict) -> "Transcript":
        if data.get("schema") != TRANSCRIPT_SCHEMA_VERSION:
            raise FormfillError(f"unsupported transcript schema: {data.get('schema')!r}")
        return cls(entries=list(data["entries"]))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, ensure_ascii=False)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "Transcript":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


class ScriptedBackend:
    """Replays a transcript; a digest miss is a test-bug signal, not a fallback."""

    kind = "scripted"

    def __init__(self, transcript: Transcript):
        self.transcript = transcript

    def complete(self, request: ChatRequest) -> str:
        digest = request_digest(request)
        response = self.transcript.response_for(digest)
        if response is None:
            raise TranscriptMissError(
                f"no transcript entry for request digest {digest[:12]}… "
                f"(model {request.model}, {len(request.messages)} messages)"
            )
        return response


class RecordingBackend:
    """Wraps another backend and appends every completed call to a transcript."""

    kind = "recording"

    def __init__(self, inner: Backend, transcript: Transcript | None = None):
        self.inner = inner
        self.transcript = transcript if transcript is not None else Transcript()

    def complete(self, request: ChatRequest) -> str:
        response = self.inner.complete(request)
        self.transcript.append(request, response)
        return response


class OracleBackend:
    """Computes ground-truth every-key responses for harness runs.

    ``answer_fn`` maps the current prompt's effective field values (prompt
    key -> value) to the every-key verdict object; the harness fixture
    supplies it from its embedded ground truth. Works because the engine's
    user messages are themselves machine-readable JSON.
    """

    kind = "oracle"

    def __init__(self, answer_fn: Callable[[dict[str, str]], dict[str, object]]):
        self.answer_fn = answer_fn

    def complete(self, request: ChatRequest) -> str:
        current = request.messages[-1]
        if current.role != "user":
            raise FormfillError("oracle backend expects the last message to be the current prompt")
        doc = json.loads(current.content)
        effective: dict[str, str] = {}
        for prompt_key, entry in doc["form fields"].items():
            updates = entry.get("updates by user", [])
            effective[prompt_key] = updates[-1] if updates else entry["initial value"]
        answer = self.answer_fn(effective)
        return json.dumps(answer, indent=1, ensure_ascii=False)
