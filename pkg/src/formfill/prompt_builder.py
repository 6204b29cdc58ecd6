"""Deterministic serialization of the bag of context into a chat prompt.

The prompt is an ordered list of chat messages: one user/assistant exchange
per saved example (oldest first), then the current user message. The current
user message carries three blocks in order: the browsing context, the form
field structure (initial values plus user updates), and the output-format
instruction demanding one JSON object with every field key.

Prompts are pruned to the token budget by dropping whole example exchanges
oldest-first, then oldest scrapbook entries from the current message; the
form structure and instruction block are never pruned. Identical inputs
always serialize to byte-identical prompts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

from .context_store import ContextBag, SavedExample, ScrapbookEntry
from .errors import FormfillError, OverBudgetError
from .form_model import FormSnapshot, FormView, edits_view

ROLES = ("system", "user", "assistant")

# chat wire-format framing cost per message, plus the reply primer
MESSAGE_OVERHEAD_TOKENS = 4
PROMPT_PRIMER_TOKENS = 3

MIN_COMPLETION_RESERVE = 1024
RESERVE_TOKENS_PER_FIELD = 24


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise FormfillError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise FormfillError("chat message content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}

    @classmethod
    def from_dict(cls, data: dict) -> "ChatMessage":
        return cls(role=data["role"], content=data["content"])


@dataclass(frozen=True)
class ModelSpec:
    name: str
    context_window: int  # tokens

    def __post_init__(self):
        if self.context_window <= 0:
            raise FormfillError("context_window must be positive")


DEFAULT_MODEL_TABLE = (
    ModelSpec("chat-4k", 4096),
    ModelSpec("chat-16k", 16384),
)


@dataclass(frozen=True)
class ChatPrompt:
    messages: tuple[ChatMessage, ...]
    model: ModelSpec
    token_count: int


class TokenCounter(Protocol):
    def count(self, text: str) -> int: ...


class HeuristicTokenCounter:
    """Length-based token estimate: one token per four characters, rounded up.

    Deterministic and monotone under concatenation; swap in an exact counter
    for the configured backend via PromptConfig when one is available.
    """

    name = "heuristic-4cpt"

    def count(self, text: str) -> int:
        return math.ceil(len(text) / 4)


def count_tokens(text: str, counter: TokenCounter | None = None) -> int:
    counter = counter if counter is not None else HeuristicTokenCounter()
    return counter.count(text)


def prompt_tokens(messages: Sequence[ChatMessage], counter: TokenCounter) -> int:
    total = PROMPT_PRIMER_TOKENS
    for message in messages:
        total += MESSAGE_OVERHEAD_TOKENS + counter.count(message.content)
    return total


def reserve_tokens(field_count: int) -> int:
    """Completion-token reserve; the every-key response scales with the form."""
    return max(MIN_COMPLETION_RESERVE, RESERVE_TOKENS_PER_FIELD * field_count)


@dataclass(frozen=True)
class PromptKeying:
    """Unique human-readable prompt key per field.

    Keys derive from inferred field names; colliding names get a numeric
    suffix in document order ("Name", "Name (2)", ...). The model's output
    object must echo exactly these keys.
    """

    keys: tuple[tuple[str, str], ...]  # (field_id, prompt_key) in document order

    @classmethod
    def for_view(cls, view: FormView) -> "PromptKeying":
        taken: dict[str, int] = {}
        pairs: list[tuple[str, str]] = []
        for field_id, name in view.field_order:
            base = " ".join(name.split()) or field_id
            seen = taken.get(base, 0) + 1
            taken[base] = seen
            key = base if seen == 1 else f"{base} ({seen})"
            pairs.append((field_id, key))
        return cls(keys=tuple(pairs))

    @property
    def prompt_keys(self) -> tuple[str, ...]:
        return tuple(key for _, key in self.keys)

    def key_for(self, field_id: str) -> str:
        for fid, key in self.keys:
            if fid == field_id:
                return key
        raise KeyError(field_id)

    def field_for(self, prompt_key: str) -> str:
        for fid, key in self.keys:
            if key == prompt_key:
                return fid
        raise KeyError(prompt_key)


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, ensure_ascii=False)


def _context_block(scrapbook: Iterable[ScrapbookEntry]) -> list[dict]:
    block = []
    for entry in scrapbook:
        if entry.kind == "search":
            block.append({"searched for": entry.selected_text})
        elif entry.kind == "selection":
            block.append(
                {
                    "page title": entry.page_title,
                    "text before selection": entry.pre_context,
                    "selected text": entry.selected_text,
                    "text after selection": entry.post_context,
                }
            )
        else:
            block.append({"text added by user": entry.selected_text})
    return block


def render_format_instruction(keying: PromptKeying) -> str:
    """Canonical output-format instruction.

    Deliberately permits withholding suggestions: demanding a useful
    suggestion for every field flips the model into always filling.
    """
    key_list = ", ".join(json.dumps(k, ensure_ascii=False) for k in keying.prompt_keys)
    return (
        "Respond with a single JSON object and no text outside it. "
        f"The object must contain every one of these keys and no others: {key_list}. "
        "For each key, answer with the replacement text as a JSON string if that "
        "field's value should be changed; otherwise answer with the JSON value false. "
        "Leaving a field unchanged by answering false is always acceptable."
    )


def render_user_message(
    scrapbook: Sequence[ScrapbookEntry],
    view: FormView,
    keying: PromptKeying | None = None,
) -> ChatMessage:
    """Serialize browsing context, field structure, and the instruction block."""
    keying = keying if keying is not None else PromptKeying.for_view(view)
    updates_by_field: dict[str, list[str]] = {}
    for update in view.updates:
        updates_by_field.setdefault(update.field_id, []).append(update.new_value)

    fields_block: dict[str, dict] = {}
    for field_id, _ in view.field_order:
        entry: dict = {"initial value": view.initial_values[field_id]}
        if field_id in updates_by_field:
            entry["updates by user"] = updates_by_field[field_id]
        fields_block[keying.key_for(field_id)] = entry

    doc = {
        "user action context": _context_block(scrapbook),
        "form fields": fields_block,
        "instructions": render_format_instruction(keying),
    }
    return ChatMessage(role="user", content=_dump(doc))


def render_example_exchange(example: SavedExample) -> tuple[ChatMessage, ChatMessage]:
    """One few-shot exchange for a saved example.

    The user message is rendered from the example's scrapbook and initial
    field values; its intra-session edit log is dropped. The assistant
    message is the every-key object holding the user's saved final values as
    strings for fields that changed from their initial value and false
    otherwise; it is never an actual past model response.
    """
    view = edits_view(example.form, suppress_edits=True)
    keying = PromptKeying.for_view(view)
    user = render_user_message(example.scrapbook, view, keying)

    answer: dict[str, object] = {}
    for field_id, _ in view.field_order:
        final = example.final_values[field_id]
        changed = final != view.initial_values[field_id]
        answer[keying.key_for(field_id)] = final if changed else False
    assistant = ChatMessage(role="assistant", content=_dump(answer))
    return user, assistant


def select_model(
    token_count: int,
    model_table: Sequence[ModelSpec],
    reserve: int,
) -> ModelSpec:
    """Smallest model whose window fits the prompt plus the completion
    reserve; the largest model when none does (pruning then applies)."""
    for spec in model_table:
        if spec.context_window >= token_count + reserve:
            return spec
    return model_table[-1]


def assemble(
    examples: Sequence[SavedExample],
    scrapbook: Sequence[ScrapbookEntry],
    view: FormView,
    model: ModelSpec,
    counter: TokenCounter,
    reserve: int,
) -> ChatPrompt:
    """Fit example exchanges and the current message into the budget.

    Whole exchanges are dropped oldest-first; only once none remain are
    scrapbook entries dropped oldest-first (re-rendering the current message
    each step). The form structure and instruction block are never pruned;
    if they alone exceed the budget the prompt is unsatisfiable.
    """
    budget = model.context_window - reserve
    keying = PromptKeying.for_view(view)

    exchanges = [render_example_exchange(ex) for ex in examples]
    exchange_cost = [
        MESSAGE_OVERHEAD_TOKENS * 2 + counter.count(u.content) + counter.count(a.content)
        for u, a in exchanges
    ]

    entries = list(scrapbook)
    current = render_user_message(entries, view, keying)
    current_cost = MESSAGE_OVERHEAD_TOKENS + counter.count(current.content)

    dropped = 0
    total = PROMPT_PRIMER_TOKENS + sum(exchange_cost) + current_cost
    while total > budget and dropped < len(exchanges):
        total -= exchange_cost[dropped]
        dropped += 1

    while total > budget and entries:
        entries.pop(0)
        current = render_user_message(entries, view, keying)
        current_cost = MESSAGE_OVERHEAD_TOKENS + counter.count(current.content)
        total = PROMPT_PRIMER_TOKENS + sum(exchange_cost[dropped:]) + current_cost

    if total > budget:
        raise OverBudgetError(
            f"form structure and instructions alone need {total} tokens "
            f"but the budget is {budget} ({model.name} window "
            f"{model.context_window} minus reserve {reserve})"
        )

    messages: list[ChatMessage] = []
    for user, assistant in exchanges[dropped:]:
        messages.append(user)
        messages.append(assistant)
    messages.append(current)
    return ChatPrompt(messages=tuple(messages), model=model, token_count=total)


@dataclass
class PromptConfig:
    model_table: tuple[ModelSpec, ...] = DEFAULT_MODEL_TABLE
    counter: TokenCounter = field(default_factory=HeuristicTokenCounter)


def build_prompt(
    bag: ContextBag,
    snapshot: FormSnapshot,
    suppress_edits: bool = False,
    config: PromptConfig | None = None,
) -> ChatPrompt:
    """Render, size, select a model once (upward only), and prune to fit."""
    config = config if config is not None else PromptConfig()
    view = edits_view(snapshot, suppress_edits=suppress_edits)
    examples = bag.eligible_examples(snapshot)
    reserve = reserve_tokens(view.field_count)

    keying = PromptKeying.for_view(view)
    full_messages: list[ChatMessage] = []
    for example in examples:
        user, assistant = render_example_exchange(example)
        full_messages.extend((user, assistant))
    full_messages.append(render_user_message(bag.scrapbook, view, keying))
    full_count = prompt_tokens(full_messages, config.counter)

    model = select_model(full_count, config.model_table, reserve)
    return assemble(examples, bag.scrapbook, view, model, config.counter, reserve)
