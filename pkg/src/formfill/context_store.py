"""Scrapbook and saved-example store.

Owns the mutable scrapbook (selections, manual text, search queries) and the
append-only list of saved examples, and persists both as one versioned JSON
document per session store. Selection entries carry up to 500 characters of
surrounding context on each side of the selected span.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import (
    CorruptStoreError,
    EmptyTextError,
    EntryNotFoundError,
    IncompleteExampleError,
    InvalidSelectionError,
)
from .form_model import FormSnapshot

CONTEXT_WINDOW_CHARS = 500

STORE_SCHEMA_VERSION = 1

ENTRY_KINDS = ("selection", "manual", "search")


@dataclass(frozen=True)
class ScrapbookEntry:
    """One unit of foregrounded browsing context."""

    entry_id: str
    kind: str  # "selection" | "manual" | "search"
    selected_text: str  # payload; the query string for kind="search"
    page_title: str = ""  # empty for manual/search entries
    pre_context: str = ""  # selection kind only
    post_context: str = ""  # selection kind only
    created_at: int = 0  # per-store monotonic sequence, not wall clock

    def to_dict(self) -> dict:
        return {
            "entry_id": self.entry_id,
            "kind": self.kind,
            "selected_text": self.selected_text,
            "page_title": self.page_title,
            "pre_context": self.pre_context,
            "post_context": self.post_context,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ScrapbookEntry":
        return cls(
            entry_id=data["entry_id"],
            kind=data["kind"],
            selected_text=data["selected_text"],
            page_title=data["page_title"],
            pre_context=data["pre_context"],
            post_context=data["post_context"],
            created_at=data["created_at"],
        )


@dataclass(frozen=True)
class SavedExample:
    """A frozen (scrapbook, form structure, final field values) triple.

    Examples are immutable once created and render as one few-shot
    user/assistant exchange. ``site_identity`` keys the example to the
    form-filling workflow it was saved from.
    """

    example_id: str
    scrapbook: tuple[ScrapbookEntry, ...]
    form: FormSnapshot
    final_values: dict[str, str]  # field_id -> text at save time
    created_at: int
    site_identity: str

    def to_dict(self) -> dict:
        return {
            "example_id": self.example_id,
            "scrapbook": [e.to_dict() for e in self.scrapbook],
            "form": self.form.to_dict(),
            "final_values": dict(self.final_values),
            "created_at": self.created_at,
            "site_identity": self.site_identity,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SavedExample":
        return cls(
            example_id=data["example_id"],
            scrapbook=tuple(ScrapbookEntry.from_dict(e) for e in data["scrapbook"]),
            form=FormSnapshot.from_dict(data["form"]),
            final_values=dict(data["final_values"]),
            created_at=data["created_at"],
            site_identity=data["site_identity"],
        )


def site_identity(site_key: str, field_names: list[str]) -> str:
    """Target-site identity: URL origin plus the form's field-name multiset.

    Only examples whose identity matches the current form's are eligible for
    prompt inclusion; cross-form leakage would corrupt the few-shot intent.
    """
    return site_key + "|" + "\x1f".join(sorted(field_names))


@dataclass
class ContextBag:
    """The scrapbook plus all saved examples for one session."""

    scrapbook: list[ScrapbookEntry] = field(default_factory=list)
    examples: list[SavedExample] = field(default_factory=list)

    def eligible_examples(self, snapshot: FormSnapshot) -> list[SavedExample]:
        """Examples matching the snapshot's target-site identity, oldest first."""
        key = site_identity(snapshot.site_key, [f.name for f in snapshot.fields])
        return [ex for ex in self.examples if ex.site_identity == key]

    def to_dict(self) -> dict:
        return {
            "scrapbook": [e.to_dict() for e in self.scrapbook],
            "examples": [e.to_dict() for e in self.examples],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContextBag":
        return cls(
            scrapbook=[ScrapbookEntry.from_dict(e) for e in data["scrapbook"]],
            examples=[SavedExample.from_dict(e) for e in data["examples"]],
        )


class ContextStore:
    """Single-writer store for one session's bag of context.

    All mutations run through the owning session's execution context; reads
    for prompt building take immutable snapshots (tuples / frozen dataclasses)
    that are safe to hand to concurrent request issuance.
    """

    def __init__(self, bag: ContextBag | None = None, next_seq: int = 1):
        self.bag = bag if bag is not None else ContextBag()
        self._next_seq = next_seq

    @property
    def next_seq(self) -> int:
        return self._next_seq

    def _take_seq(self) -> int:
        seq = self._next_seq
        self._next_seq += 1
        return seq

    def _new_entry_id(self, seq: int) -> str:
        return f"entry-{seq}"

    def add_selection(
        self, page_title: str, document_text: str, sel_start: int, sel_end: int
    ) -> ScrapbookEntry:
        """Capture a text selection with 500 characters of context each side.

        ``pre_context`` is the window ending at ``sel_start`` clamped at the
        document start; ``post_context`` is symmetric at the end.
        """
        if sel_start == sel_end:
            raise InvalidSelectionError("selection is empty")
        if not (0 <= sel_start < sel_end <= len(document_text)):
            raise InvalidSelectionError(
                f"selection {sel_start}..{sel_end} out of range for "
                f"document of length {len(document_text)}"
            )
        seq = self._take_seq()
        entry = ScrapbookEntry(
            entry_id=self._new_entry_id(seq),
            kind="selection",
            selected_text=document_text[sel_start:sel_end],
            page_title=page_title,
            pre_context=document_text[max(0, sel_start - CONTEXT_WINDOW_CHARS) : sel_start],
            post_context=document_text[sel_end : sel_end + CONTEXT_WINDOW_CHARS],
            created_at=seq,
        )
        self.bag.scrapbook.append(entry)
        return entry

    def add_manual(self, text: str) -> ScrapbookEntry:
        """Add free-form text pasted or typed by the user, stored verbatim."""
        if not text.strip():
            raise EmptyTextError("manual context text is empty")
        seq = self._take_seq()
        entry = ScrapbookEntry(
            entry_id=self._new_entry_id(seq),
            kind="manual",
            selected_text=text,
            created_at=seq,
        )
        self.bag.scrapbook.append(entry)
        return entry

    def add_search(self, query: str) -> ScrapbookEntry:
        """Record a search query.

        Consecutive duplicates collapse into the existing tail entry so that
        incremental search-box keystrokes do not flood the scrapbook;
        non-consecutive repeats are kept.
        """
        if not query.strip():
            raise EmptyTextError("search query is empty")
        if self.bag.scrapbook:
            tail = self.bag.scrapbook[-1]
            if tail.kind == "search" and tail.selected_text == query:
                return tail
        seq = self._take_seq()
        entry = ScrapbookEntry(
            entry_id=self._new_entry_id(seq),
            kind="search",
            selected_text=query,
            created_at=seq,
        )
        self.bag.scrapbook.append(entry)
        return entry

    def delete_entry(self, entry_id: str) -> None:
        """Remove one scrapbook entry, preserving the order of the rest."""
        for i, entry in enumerate(self.bag.scrapbook):
            if entry.entry_id == entry_id:
                del self.bag.scrapbook[i]
                return
        raise EntryNotFoundError(f"no scrapbook entry with id {entry_id!r}")

    def save_example(self, form: FormSnapshot, final_values: dict[str, str]) -> SavedExample:
        """Freeze (scrapbook, form, final values) and clear the scrapbook.

        The save is atomic: on a coverage error the scrapbook is untouched.
        Examples are append-only; nothing mutates or deletes them later.
        """
        form_ids = {f.field_id for f in form.fields}
        missing = form_ids - set(final_values)
        extra = set(final_values) - form_ids
        if missing or extra:
            raise IncompleteExampleError(
                f"final values must cover the form exactly "
                f"(missing={sorted(missing)}, unknown={sorted(extra)})"
            )
        seq = self._take_seq()
        example = SavedExample(
            example_id=f"example-{seq}",
            scrapbook=tuple(self.bag.scrapbook),
            form=form.frozen_copy(),
            final_values=dict(final_values),
            created_at=seq,
            site_identity=site_identity(form.site_key, [f.name for f in form.fields]),
        )
        self.bag.examples.append(example)
        self.bag.scrapbook.clear()
        return example

    def scrapbook_snapshot(self) -> tuple[ScrapbookEntry, ...]:
        """Immutable copy of the scrapbook for prompt building."""
        return tuple(self.bag.scrapbook)

    def to_dict(self) -> dict:
        return {
            "schema": STORE_SCHEMA_VERSION,
            "next_seq": self._next_seq,
            "bag": self.bag.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ContextStore":
        if data.get("schema") != STORE_SCHEMA_VERSION:
            raise CorruptStoreError(
                f"unsupported store schema: {data.get('schema')!r}"
            )
        return cls(bag=ContextBag.from_dict(data["bag"]), next_seq=data["next_seq"])


def persist(store: ContextStore, path: str) -> None:
    """Write the store to ``path`` atomically (write-then-rename)."""
    doc = json.dumps(store.to_dict(), indent=1, ensure_ascii=False) + "\n"
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(doc)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def load(path: str) -> ContextStore:
    """Load a persisted store; corrupt stores fail loudly, never partially."""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptStoreError(f"store file {path!r} is not intact: {exc}") from exc
    try:
        return ContextStore.from_dict(data)
    except CorruptStoreError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptStoreError(f"store file {path!r} has invalid contents: {exc}") from exc
