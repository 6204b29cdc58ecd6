"""Synthetic evaluation tasks, end-to-end replay, and success grids.

The data-formatting fixture generates member profiles whose phone numbers
and T-shirt sizes appear in randomly chosen source formats; the task is to
reformat them to one canonical target. The harness drives the engine over
each profile in fixture order (invoke first, then apply the corrected values
and save an example, the way a user working through the roster would), and
scoring renders a
per-profile grid: first invocation only, a phone cell counts as correct only
when both phone fields are right, and profiles needing no phone change are
excluded.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass, field

from .errors import ScoringError
from .llm_gateway import Backend, OracleBackend
from .prompt_builder import PromptConfig
from .session_service import SessionService
from .suggestion_engine import SUGGEST, SuggestionSet

FIXTURE_SCHEMA_VERSION = 1

PHONE_FIELDS = ("Phone", "Mobile")
SHIRT_FIELD = "T-shirt size"
IDENTITY_FIELDS = ("First name", "Last name")

FIELD_IDS = {
    "First name": "first_name",
    "Last name": "last_name",
    "Phone": "phone",
    "Mobile": "mobile",
    "T-shirt size": "tshirt_size",
}

# canonical target format for every phone number: (###) ###-####
def canonical_phone(digits: str) -> str:
    return f"({digits[0:3]}) {digits[3:6]}-{digits[6:10]}"


# source formats seen in profiles; none equals the canonical target
PHONE_FORMATS = (
    ("plain", "{a}{b}{c}"),
    ("dashed", "{a}-{b}-{c}"),
    ("dotted", "{a}.{b}.{c}"),
    ("country", "+1 ({a}) {b}-{c}"),
    ("tight_parens", "({a}){b}-{c}"),
)

SHIRT_SIZES = ("S", "M", "L", "XL", "XXL")

# alias pool per canonical size; the canonical token itself appears so some
# profiles need no shirt change
SHIRT_ALIASES = {
    "S": ("S", "small", "Small", "sm"),
    "M": ("M", "medium", "Med.", "med"),
    "L": ("L", "large", "Large", "lg"),
    "XL": ("XL", "extra large", "X-Large", "xlarge"),
    "XXL": ("XXL", "XX-Large", "2XL", "extra extra large"),
}

_FIRST_NAMES = (
    "Ada", "Ben", "Carla", "Dmitri", "Елена", "Farid", "Grace", "Hugo",
    "Imani", "Jonas", "Keiko", "Lars", "Mina", "Noel", "Olga", "Priya",
    "Quentin", "Rosa", "Samir", "Tessa", "Umar", "Vera", "Wesley", "Ximena",
    "Yara", "Zoltan", "Astrid", "Bram", "Celine", "Diego",
)

_LAST_NAMES = (
    "Abbott", "Barnes", "Castillo", "Duarte", "Eng", "Fontaine", "Geller",
    "Hassan", "Ibarra", "Jensen", "Kovacs", "Lindqvist", "Moreau", "Nakamura",
    "Okafor", "Petrov", "Quispe", "Rahman", "Silva", "Tanaka", "Ueda",
    "Vargas", "Whitfield", "Xu", "Yilmaz", "Zhou", "Aldana", "Brennan",
    "Cheng", "Delacroix",
)

OUTCOMES = ("correct", "incorrect", "no_suggestion", "not_applicable")


@dataclass(frozen=True)
class MemberProfile:
    profile_id: str
    values: dict[str, str]  # field name -> prepopulated value ("" when absent)
    ground_truth: dict[str, str]  # field name -> corrected value

    def to_dict(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "values": dict(self.values),
            "ground_truth": dict(self.ground_truth),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MemberProfile":
        return cls(
            profile_id=data["profile_id"],
            values=dict(data["values"]),
            ground_truth=dict(data["ground_truth"]),
        )


@dataclass
class DataFormattingFixture:
    """Profiles in randomized order plus embedded machine-readable ground truth."""

    seed: int
    profiles: list[MemberProfile]

    def form_fields(self, profile: MemberProfile) -> list[tuple[str, str, str]]:
        return [
            (FIELD_IDS[name], name, profile.values[name])
            for name in (*IDENTITY_FIELDS, *PHONE_FIELDS, SHIRT_FIELD)
        ]

    def profile_for(self, effective: dict[str, str]) -> MemberProfile:
        """Match a prompt's effective field values back to a profile."""
        for profile in self.profiles:
            if all(effective.get(name) == profile.values[name] for name in IDENTITY_FIELDS):
                return profile
        raise ScoringError(f"no profile matches identity fields in {effective!r}")

    def oracle(self, effective: dict[str, str]) -> dict[str, object]:
        """Ground-truth every-key object for the profile the prompt shows."""
        profile = self.profile_for(effective)
        answer: dict[str, object] = {}
        for key in effective:
            truth = profile.ground_truth.get(key)
            if truth is not None and truth != effective[key]:
                answer[key] = truth
            else:
                answer[key] = False
        return answer

    def oracle_backend(self) -> OracleBackend:
        return OracleBackend(self.oracle)

    def to_dict(self) -> dict:
        return {
            "schema": FIXTURE_SCHEMA_VERSION,
            "seed": self.seed,
            "profiles": [p.to_dict() for p in self.profiles],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DataFormattingFixture":
        if data.get("schema") != FIXTURE_SCHEMA_VERSION:
            raise ScoringError(f"unsupported fixture schema: {data.get('schema')!r}")
        return cls(
            seed=data["seed"],
            profiles=[MemberProfile.from_dict(p) for p in data["profiles"]],
        )

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1, ensure_ascii=False)
            f.write("\n")

    @classmethod
    def load(cls, path: str) -> "DataFormattingFixture":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


def _random_digits(rng: random.Random) -> str:
    return str(rng.randint(2, 9)) + "".join(str(rng.randint(0, 9)) for _ in range(9))


def _format_phone(digits: str, template: str) -> str:
    return template.format(a=digits[0:3], b=digits[3:6], c=digits[6:10])


def generate_fixture(
    seed: int,
    n_profiles: int,
    mobile_ratio: float = 45 / 51,
    phone_ratio: float = 14 / 51,
) -> DataFormattingFixture:
    """Deterministic fixture for a seed; profile order is shuffled per seed.

    Every profile carries a shirt size; mobile numbers appear on most
    profiles and home phones on a minority, per the default ratios.
    """
    if n_profiles < 1:
        raise ValueError("n_profiles must be >= 1")
    rng = random.Random(seed)

    pairs: set[tuple[str, str]] = set()
    while len(pairs) < n_profiles:
        pairs.add((rng.choice(_FIRST_NAMES), rng.choice(_LAST_NAMES)))
    names = sorted(pairs)
    rng.shuffle(names)

    mobile_count = round(n_profiles * mobile_ratio)
    phone_count = round(n_profiles * phone_ratio)
    has_mobile = set(rng.sample(range(n_profiles), mobile_count))
    has_phone = set(rng.sample(range(n_profiles), phone_count))

    profiles: list[MemberProfile] = []
    for i, (first, last) in enumerate(names):
        values: dict[str, str] = {"First name": first, "Last name": last}
        truth: dict[str, str] = {}
        for fname, present in (("Phone", i in has_phone), ("Mobile", i in has_mobile)):
            if present:
                digits = _random_digits(rng)
                _, template = PHONE_FORMATS[rng.randrange(len(PHONE_FORMATS))]
                values[fname] = _format_phone(digits, template)
                truth[fname] = canonical_phone(digits)
            else:
                values[fname] = ""
                truth[fname] = ""
        size = rng.choice(SHIRT_SIZES)
        values[SHIRT_FIELD] = rng.choice(SHIRT_ALIASES[size])
        truth[SHIRT_FIELD] = size
        profiles.append(
            MemberProfile(profile_id=f"member-{i + 1:03d}", values=values, ground_truth=truth)
        )

    rng.shuffle(profiles)
    return DataFormattingFixture(seed=seed, profiles=profiles)


@dataclass
class InvocationRecord:
    profile_id: str
    order_index: int
    suggestions: SuggestionSet

    def to_dict(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "order_index": self.order_index,
            "suggestions": self.suggestions.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InvocationRecord":
        return cls(
            profile_id=data["profile_id"],
            order_index=data["order_index"],
            suggestions=SuggestionSet.from_dict(data["suggestions"]),
        )


@dataclass
class SessionLog:
    """Ordered invocation log for one replay run."""

    fixture_seed: int
    records: list[InvocationRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "fixture_seed": self.fixture_seed,
            "records": [r.to_dict() for r in self.records],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SessionLog":
        return cls(
            fixture_seed=data["fixture_seed"],
            records=[InvocationRecord.from_dict(r) for r in data["records"]],
        )


def run_replay(
    fixture: DataFormattingFixture,
    backend: Backend,
    state_dir: str,
    prompt_config: PromptConfig | None = None,
    site_key: str = "https://hr.example",
) -> SessionLog:
    """Drive the engine over every profile in fixture order.

    Mirrors the interactive flow: on each profile the form is synced fresh
    (page navigation), the engine is invoked once before any edits, and the
    corrected values are then applied and saved as an example for the next
    profiles' prompts.
    """
    service = SessionService(state_dir, backend, prompt_config=prompt_config)
    hello = service.handle_message({"type": "hello", "site_key": site_key})[0]
    session_id = hello["session"]
    log = SessionLog(fixture_seed=fixture.seed)

    for index, profile in enumerate(fixture.profiles):
        fields = [
            {"field_id": fid, "name": name, "value": value}
            for fid, name, value in fixture.form_fields(profile)
        ]
        reply = service.handle_message(
            {"type": "sync_form", "session": session_id, "fields": fields, "navigation": True}
        )[0]
        if reply["type"] == "error":
            raise ScoringError(f"sync failed for {profile.profile_id}: {reply['detail']}")

        replies = service.handle_message({"type": "invoke", "session": session_id})
        push = next((r for r in replies if r["type"] == "suggestions_push"), None)
        if push is None:
            raise ScoringError(f"invoke failed for {profile.profile_id}: {replies[0]}")
        log.records.append(
            InvocationRecord(
                profile_id=profile.profile_id,
                order_index=index,
                suggestions=SuggestionSet.from_dict(push["suggestions"]),
            )
        )

        # the simulated participant corrects every field, then saves an example
        for name, fid in FIELD_IDS.items():
            truth = profile.ground_truth.get(name, profile.values[name])
            if truth != profile.values[name]:
                service.handle_message(
                    {
                        "type": "field_updated",
                        "session": session_id,
                        "field_id": fid,
                        "value": truth,
                    }
                )
        service.handle_message({"type": "save_example", "session": session_id})

    return log


@dataclass(frozen=True)
class GridCell:
    profile_id: str
    order_index: int
    phone_outcome: str  # one of OUTCOMES
    shirt_outcome: str  # one of OUTCOMES
    accepted_incorrect: bool = False  # acceptance flags; no human in replay runs
    rejected_correct: bool = False


@dataclass
class SuccessGrid:
    """Per-profile, first-invocation correctness for one run."""

    run_id: str
    cells: list[GridCell] = field(default_factory=list)
    fallback_contribution: int = 0  # invocations with >=1 fallback-sourced suggestion
    overeager_suggestions: int = 0  # suggestions on fields needing no change

    @property
    def phone_success_ratio(self) -> float | None:
        applicable = [c for c in self.cells if c.phone_outcome != "not_applicable"]
        if not applicable:
            return None
        return sum(1 for c in applicable if c.phone_outcome == "correct") / len(applicable)

    @property
    def shirt_success_ratio(self) -> float | None:
        applicable = [c for c in self.cells if c.shirt_outcome != "not_applicable"]
        if not applicable:
            return None
        return sum(1 for c in applicable if c.shirt_outcome == "correct") / len(applicable)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(
            [
                "run",
                "order_index",
                "profile_id",
                "phone_outcome",
                "shirt_outcome",
                "accepted_incorrect",
                "rejected_correct",
            ]
        )
        for cell in self.cells:
            writer.writerow(
                [
                    self.run_id,
                    cell.order_index,
                    cell.profile_id,
                    cell.phone_outcome,
                    cell.shirt_outcome,
                    str(cell.accepted_incorrect).lower(),
                    str(cell.rejected_correct).lower(),
                ]
            )
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SuccessGrid":
        reader = csv.DictReader(io.StringIO(text))
        cells: list[GridCell] = []
        run_id = ""
        for row in reader:
            run_id = row["run"]
            cells.append(
                GridCell(
                    profile_id=row["profile_id"],
                    order_index=int(row["order_index"]),
                    phone_outcome=row["phone_outcome"],
                    shirt_outcome=row["shirt_outcome"],
                    accepted_incorrect=row["accepted_incorrect"] == "true",
                    rejected_correct=row["rejected_correct"] == "true",
                )
            )
        return cls(run_id=run_id, cells=cells)


def _field_outcome(
    suggestions: SuggestionSet,
    fid: str,
    initial: str,
    truth: str,
) -> str:
    verdict = suggestions.verdicts[fid]
    needs_change = truth != initial
    if verdict.kind == SUGGEST:
        return "correct" if (needs_change and verdict.text == truth) else "incorrect"
    return "no_suggestion" if needs_change else "correct"


def _combine(outcomes: list[str]) -> str:
    if "incorrect" in outcomes:
        return "incorrect"
    if "no_suggestion" in outcomes:
        return "no_suggestion"
    return "correct"


def score_run(log: SessionLog, fixture: DataFormattingFixture, run_id: str = "run-0") -> SuccessGrid:
    """Pure scoring of a replay log against its fixture's ground truth."""
    by_id = {p.profile_id: p for p in fixture.profiles}
    grid = SuccessGrid(run_id=run_id)
    seen: set[str] = set()
    for record in log.records:
        profile = by_id.get(record.profile_id)
        if profile is None:
            raise ScoringError(f"log references unknown profile {record.profile_id!r}")
        if record.profile_id in seen:
            continue  # only the first request counts per profile
        seen.add(record.profile_id)
        if set(record.suggestions.verdicts) != set(FIELD_IDS.values()):
            raise ScoringError(f"log verdicts do not cover the fixture form for {record.profile_id!r}")

        phone_parts = []
        phone_needed = False
        for name in PHONE_FIELDS:
            fid = FIELD_IDS[name]
            initial = profile.values[name]
            truth = profile.ground_truth[name]
            if truth != initial:
                phone_needed = True
            phone_parts.append(_field_outcome(record.suggestions, fid, initial, truth))
        phone_outcome = _combine(phone_parts) if phone_needed else "not_applicable"

        shirt_fid = FIELD_IDS[SHIRT_FIELD]
        shirt_initial = profile.values[SHIRT_FIELD]
        shirt_truth = profile.ground_truth[SHIRT_FIELD]
        if shirt_truth != shirt_initial:
            shirt_outcome = _field_outcome(
                record.suggestions, shirt_fid, shirt_initial, shirt_truth
            )
        else:
            shirt_outcome = "not_applicable"

        if record.suggestions.fallback_contributed:
            grid.fallback_contribution += 1
        for name in (*PHONE_FIELDS, SHIRT_FIELD, *IDENTITY_FIELDS):
            fid = FIELD_IDS[name]
            truth = profile.ground_truth.get(name, profile.values[name])
            verdict = record.suggestions.verdicts[fid]
            if verdict.kind == SUGGEST and truth == profile.values[name]:
                grid.overeager_suggestions += 1

        grid.cells.append(
            GridCell(
                profile_id=record.profile_id,
                order_index=record.order_index,
                phone_outcome=phone_outcome,
                shirt_outcome=shirt_outcome,
            )
        )
    return grid
