"""Target-form structure, initial values, and the user-edit log.

A snapshot's initial values are set at first sync or whenever the form's
field-id set changes (a rebaseline), whichever came later; the edit log is
cleared on every rebaseline so the prompt can start fresh when submission
adds new fields to the page instead of reloading it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import DuplicateFieldError, FieldNotFoundError


@dataclass
class FormField:
    field_id: str  # stable opaque identifier within a snapshot
    name: str  # inferred human-readable label
    initial_value: str
    current_value: str

    def to_dict(self) -> dict:
        return {
            "field_id": self.field_id,
            "name": self.name,
            "initial_value": self.initial_value,
            "current_value": self.current_value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FormField":
        return cls(
            field_id=data["field_id"],
            name=data["name"],
            initial_value=data["initial_value"],
            current_value=data["current_value"],
        )


@dataclass(frozen=True)
class FieldUpdate:
    field_id: str
    new_value: str
    seq: int  # strictly increasing within a snapshot

    def to_dict(self) -> dict:
        return {"field_id": self.field_id, "new_value": self.new_value, "seq": self.seq}

    @classmethod
    def from_dict(cls, data: dict) -> "FieldUpdate":
        return cls(field_id=data["field_id"], new_value=data["new_value"], seq=data["seq"])


@dataclass
class FormSnapshot:
    """Current form structure plus the ordered log of user edits."""

    site_key: str
    fields: list[FormField] = field(default_factory=list)
    updates: list[FieldUpdate] = field(default_factory=list)
    baseline_epoch: int = 0
    next_update_seq: int = 1

    def field_by_id(self, field_id: str) -> FormField:
        for f in self.fields:
            if f.field_id == field_id:
                return f
        raise FieldNotFoundError(f"no form field with id {field_id!r}")

    def frozen_copy(self) -> "FormSnapshot":
        """Deep copy safe to store in an immutable example."""
        return FormSnapshot(
            site_key=self.site_key,
            fields=[replace(f) for f in self.fields],
            updates=list(self.updates),
            baseline_epoch=self.baseline_epoch,
            next_update_seq=self.next_update_seq,
        )

    def current_values(self) -> dict[str, str]:
        return {f.field_id: f.current_value for f in self.fields}

    def to_dict(self) -> dict:
        return {
            "site_key": self.site_key,
            "fields": [f.to_dict() for f in self.fields],
            "updates": [u.to_dict() for u in self.updates],
            "baseline_epoch": self.baseline_epoch,
            "next_update_seq": self.next_update_seq,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FormSnapshot":
        return cls(
            site_key=data["site_key"],
            fields=[FormField.from_dict(f) for f in data["fields"]],
            updates=[FieldUpdate.from_dict(u) for u in data["updates"]],
            baseline_epoch=data["baseline_epoch"],
            next_update_seq=data["next_update_seq"],
        )


@dataclass(frozen=True)
class FormView:
    """Read-only projection of a snapshot handed to prompt building.

    With edits suppressed, ``updates`` is empty and ``effective_values``
    equals ``initial_values``; the stored snapshot is never touched.
    """

    site_key: str
    field_order: tuple[tuple[str, str], ...]  # (field_id, name) in document order
    initial_values: dict[str, str]
    updates: tuple[FieldUpdate, ...]
    effective_values: dict[str, str]

    @property
    def field_count(self) -> int:
        return len(self.field_order)


def sync_structure(
    snapshot: FormSnapshot | None,
    site_key: str,
    fields: list[tuple[str, str, str]],
    force_rebaseline: bool = False,
) -> FormSnapshot:
    """Apply a page sync of (field_id, name, value) triples.

    Rebaselines exactly when the field-id set differs from the previous
    snapshot's: initial values become the supplied page values, the edit log
    clears, and the epoch increments. An unchanged id set only refreshes
    names; values and the edit log are left alone. ``force_rebaseline``
    models a page load, which is always a fresh baseline (the epoch counter
    still continues from the previous snapshot).
    """
    ids = [fid for fid, _, _ in fields]
    if len(set(ids)) != len(ids):
        dupes = sorted({fid for fid in ids if ids.count(fid) > 1})
        raise DuplicateFieldError(f"duplicate field ids in sync: {dupes}")

    if (
        not force_rebaseline
        and snapshot is not None
        and set(ids) == {f.field_id for f in snapshot.fields}
    ):
        names = {fid: name for fid, name, _ in fields}
        for f in snapshot.fields:
            f.name = names[f.field_id]
        snapshot.site_key = site_key
        return snapshot

    epoch = 1 if snapshot is None else snapshot.baseline_epoch + 1
    return FormSnapshot(
        site_key=site_key,
        fields=[
            FormField(field_id=fid, name=name, initial_value=value, current_value=value)
            for fid, name, value in fields
        ],
        updates=[],
        baseline_epoch=epoch,
        next_update_seq=1,
    )


def apply_update(snapshot: FormSnapshot, field_id: str, new_value: str) -> None:
    """Record a user edit.

    Consecutive updates to the same field coalesce into the latest so that
    keystroke-level streams do not bloat the prompt; interleaved updates to
    different fields are all kept.
    """
    target = snapshot.field_by_id(field_id)
    target.current_value = new_value
    if snapshot.updates and snapshot.updates[-1].field_id == field_id:
        snapshot.updates.pop()
    seq = snapshot.next_update_seq
    snapshot.next_update_seq = seq + 1
    snapshot.updates.append(FieldUpdate(field_id=field_id, new_value=new_value, seq=seq))


def edits_view(snapshot: FormSnapshot, suppress_edits: bool = False) -> FormView:
    """Pure projection of the snapshot; never mutates it."""
    initial = {f.field_id: f.initial_value for f in snapshot.fields}
    if suppress_edits:
        updates: tuple[FieldUpdate, ...] = ()
        effective = dict(initial)
    else:
        updates = tuple(snapshot.updates)
        effective = {f.field_id: f.current_value for f in snapshot.fields}
    return FormView(
        site_key=snapshot.site_key,
        field_order=tuple((f.field_id, f.name) for f in snapshot.fields),
        initial_values=initial,
        updates=updates,
        effective_values=effective,
    )
