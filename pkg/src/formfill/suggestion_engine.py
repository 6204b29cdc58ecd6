"""Dual-request invocation, response parsing, fallback merge, and caching.

Each invocation issues two concurrent requests: the primary prompt with the
user's edits visible and a secondary prompt with edits suppressed (skipped
when there are no edits, since the prompts would be identical). The primary
verdicts always win; the secondary's suggestions fill only fields the
primary left unchanged. Responses are cached by request digest so repeated
identical invocations hit the upstream API once.
"""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .context_store import ContextBag
from .errors import InvocationError, MalformedResponseError
from .form_model import FormSnapshot, edits_view
from .llm_gateway import Backend, ChatRequest, request_digest
from .prompt_builder import (
    ChatPrompt,
    PromptConfig,
    PromptKeying,
    build_prompt,
    reserve_tokens,
)

PROVENANCES = ("primary_request", "fallback_request")

SUGGEST = "suggest"
NO_CHANGE = "no_change"


@dataclass(frozen=True)
class Verdict:
    kind: str  # SUGGEST | NO_CHANGE
    text: str | None = None  # replacement text for SUGGEST
    provenance: str = "primary_request"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "text": self.text, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data: dict) -> "Verdict":
        return cls(kind=data["kind"], text=data["text"], provenance=data["provenance"])


@dataclass
class SuggestionSet:
    """Exactly one verdict per form field, plus invocation metadata."""

    verdicts: dict[str, Verdict]  # field_id -> verdict
    invocation_seq: int = 0
    degraded: str | None = None  # set when one of the dual requests failed
    fallback_contributed: bool = False

    def to_dict(self) -> dict:
        return {
            "verdicts": {fid: v.to_dict() for fid, v in sorted(self.verdicts.items())},
            "invocation_seq": self.invocation_seq,
            "degraded": self.degraded,
            "fallback_contributed": self.fallback_contributed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SuggestionSet":
        return cls(
            verdicts={fid: Verdict.from_dict(v) for fid, v in data["verdicts"].items()},
            invocation_seq=data["invocation_seq"],
            degraded=data["degraded"],
            fallback_contributed=data["fallback_contributed"],
        )


def extract_json_object(raw: str) -> dict:
    """First balanced top-level JSON object in the raw text.

    Chat models occasionally wrap their output in prose; strictness is still
    enforced inside the object itself.
    """
    depth = 0
    start = None
    in_string = False
    escaped = False
    for i, ch in enumerate(raw):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0 and start is not None:
                    try:
                        parsed = json.loads(raw[start : i + 1])
                    except json.JSONDecodeError:
                        start = None
                        continue
                    if isinstance(parsed, dict):
                        return parsed
                    start = None
    raise MalformedResponseError("no parsable JSON object in response")


def parse_response(raw: str, keying: PromptKeying) -> dict[str, str | bool]:
    """Validate the every-key contract and return per-prompt-key verdicts.

    String values suggest a replacement, literal false means no change, and
    missing keys default to no change. Unknown keys and any other value type
    signal prompt/response desynchronization and are errors.
    """
    obj = extract_json_object(raw)
    expected = set(keying.prompt_keys)
    unknown = set(obj) - expected
    if unknown:
        raise MalformedResponseError(f"response contains unknown keys: {sorted(unknown)}")
    verdicts: dict[str, str | bool] = {}
    for key in keying.prompt_keys:
        if key not in obj:
            verdicts[key] = False
            continue
        value = obj[key]
        if isinstance(value, str):
            verdicts[key] = value
        elif value is False:
            verdicts[key] = False
        else:
            raise MalformedResponseError(
                f"key {key!r} must map to a string or false, got {value!r}"
            )
    return verdicts


def normalize(
    parsed: dict[str, str | bool],
    keying: PromptKeying,
    current_values: dict[str, str],
    provenance: str,
) -> dict[str, Verdict]:
    """Map prompt-key verdicts onto field ids.

    A suggestion exactly equal to the field's current value is a no-change;
    the comparison is exact, so leading/trailing whitespace differences still
    count as suggestions.
    """
    verdicts: dict[str, Verdict] = {}
    for field_id, key in keying.keys:
        value = parsed[key]
        if isinstance(value, str) and value != current_values[field_id]:
            verdicts[field_id] = Verdict(kind=SUGGEST, text=value, provenance=provenance)
        else:
            verdicts[field_id] = Verdict(kind=NO_CHANGE, provenance=provenance)
    return verdicts


class CompletionCache:
    """Digest-keyed response cache, persisted alongside the session store."""

    SCHEMA_VERSION = 1

    def __init__(self, path: str | None = None):
        self.path = path
        self._responses: dict[str, str] = {}
        self._lock = threading.Lock()
        if path is not None and os.path.exists(path):
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
            self._responses = dict(data["responses"])

    def get(self, digest: str) -> str | None:
        with self._lock:
            return self._responses.get(digest)

    def put(self, digest: str, response: str) -> None:
        with self._lock:
            self._responses[digest] = response
            if self.path is not None:
                doc = json.dumps(
                    {"schema": self.SCHEMA_VERSION, "responses": self._responses},
                    indent=1,
                    ensure_ascii=False,
                )
                tmp = self.path + ".tmp"
                with open(tmp, "w", encoding="utf-8") as f:
                    f.write(doc + "\n")
                os.replace(tmp, self.path)

    def __len__(self) -> int:
        with self._lock:
            return len(self._responses)


@dataclass
class _SideOutcome:
    verdicts: dict[str, Verdict] | None = None
    error: Exception | None = None


class SuggestionEngine:
    """Builds prompts, talks to one backend, and merges dual responses."""

    def __init__(
        self,
        backend: Backend,
        config: PromptConfig | None = None,
        cache: CompletionCache | None = None,
    ):
        self.backend = backend
        self.config = config if config is not None else PromptConfig()
        self.cache = cache if cache is not None else CompletionCache()

    def cached_complete(self, prompt: ChatPrompt) -> str:
        """Complete through the cache; upstream failures are never cached."""
        request = ChatRequest.for_prompt(
            prompt, max_completion_tokens=self._reserve_for(prompt)
        )
        digest = request_digest(request)
        hit = self.cache.get(digest)
        if hit is not None:
            return hit
        response = self.backend.complete(request)
        self.cache.put(digest, response)
        return response

    def _reserve_for(self, prompt: ChatPrompt) -> int:
        # the current user message closes the prompt; its keying sizes the reply
        current = prompt.messages[-1]
        field_count = len(json.loads(current.content)["form fields"])
        return reserve_tokens(field_count)

    def _run_side(
        self,
        prompt: ChatPrompt,
        keying: PromptKeying,
        current_values: dict[str, str],
        provenance: str,
    ) -> _SideOutcome:
        outcome = _SideOutcome()
        try:
            raw = self.cached_complete(prompt)
            parsed = parse_response(raw, keying)
            outcome.verdicts = normalize(parsed, keying, current_values, provenance)
        except Exception as exc:  # recorded; the other side may still carry the result
            outcome.error = exc
        return outcome

    def invoke(
        self, bag: ContextBag, snapshot: FormSnapshot, invocation_seq: int = 0
    ) -> SuggestionSet:
        """One dual-request invocation over an immutable state snapshot."""
        if not snapshot.fields:
            raise InvocationError("cannot invoke on a form with no fields")
        view = edits_view(snapshot)
        keying = PromptKeying.for_view(view)
        current_values = snapshot.current_values()
        has_edits = bool(snapshot.updates)

        prompt_a = build_prompt(bag, snapshot, suppress_edits=False, config=self.config)
        if has_edits:
            prompt_b = build_prompt(bag, snapshot, suppress_edits=True, config=self.config)
            with ThreadPoolExecutor(max_workers=2) as pool:
                future_a = pool.submit(
                    self._run_side, prompt_a, keying, current_values, "primary_request"
                )
                future_b = pool.submit(
                    self._run_side, prompt_b, keying, current_values, "fallback_request"
                )
                side_a = future_a.result()
                side_b = future_b.result()
        else:
            side_a = self._run_side(prompt_a, keying, current_values, "primary_request")
            side_b = None

        return self._merge(side_a, side_b, invocation_seq)

    @staticmethod
    def _merge(
        side_a: _SideOutcome, side_b: _SideOutcome | None, invocation_seq: int
    ) -> SuggestionSet:
        if side_a.verdicts is None and (side_b is None or side_b.verdicts is None):
            causes = [e for e in (side_a.error, side_b.error if side_b else None) if e]
            raise InvocationError(
                "all completion requests failed: "
                + "; ".join(str(c) for c in causes),
                causes=causes,
            )

        degraded = None
        if side_a.verdicts is None:
            assert side_b is not None and side_b.verdicts is not None
            merged = dict(side_b.verdicts)
            degraded = f"primary request failed: {side_a.error}"
        elif side_b is not None and side_b.verdicts is None:
            merged = dict(side_a.verdicts)
            degraded = f"fallback request failed: {side_b.error}"
        else:
            merged = dict(side_a.verdicts)
            if side_b is not None:
                assert side_b.verdicts is not None
                for field_id, fallback in side_b.verdicts.items():
                    if merged[field_id].kind == NO_CHANGE and fallback.kind == SUGGEST:
                        merged[field_id] = fallback

        fallback_contributed = any(
            v.kind == SUGGEST and v.provenance == "fallback_request"
            for v in merged.values()
        )
        return SuggestionSet(
            verdicts=merged,
            invocation_seq=invocation_seq,
            degraded=degraded,
            fallback_contributed=fallback_contributed,
        )
