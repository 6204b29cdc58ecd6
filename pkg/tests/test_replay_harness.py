import re

import pytest

from formfill.errors import ScoringError
from formfill.replay_harness import (
    FIELD_IDS,
    PHONE_FORMATS,
    SHIRT_ALIASES,
    SHIRT_SIZES,
    DataFormattingFixture,
    GridCell,
    InvocationRecord,
    MemberProfile,
    SessionLog,
    SuccessGrid,
    canonical_phone,
    generate_fixture,
    run_replay,
    score_run,
)
from formfill.suggestion_engine import SuggestionSet, Verdict

from conftest import AllFalseBackend

CANONICAL_RE = re.compile(r"^\(\d{3}\) \d{3}-\d{4}$")


class TestGenerateFixture:
    def test_default_roster_shape(self):
        fixture = generate_fixture(1, 51)
        assert len(fixture.profiles) == 51
        assert all(p.values["T-shirt size"] for p in fixture.profiles)
        mobiles = sum(1 for p in fixture.profiles if p.values["Mobile"])
        phones = sum(1 for p in fixture.profiles if p.values["Phone"])
        assert mobiles == 45
        assert phones == 14

    def test_same_seed_identical(self):
        assert generate_fixture(3, 51).to_dict() == generate_fixture(3, 51).to_dict()

    def test_different_seeds_differ_in_order(self):
        order_a = [p.profile_id for p in generate_fixture(1, 51).profiles]
        order_b = [p.profile_id for p in generate_fixture(2, 51).profiles]
        assert sorted(order_a) == sorted(order_b) == [f"member-{i:03d}" for i in range(1, 52)]
        assert order_a != order_b

    def test_ground_truth_phones_canonical(self):
        fixture = generate_fixture(0, 51)
        for profile in fixture.profiles:
            for name in ("Phone", "Mobile"):
                raw, truth = profile.values[name], profile.ground_truth[name]
                if raw:
                    assert CANONICAL_RE.match(truth), truth
                    assert re.sub(r"\D", "", truth) == re.sub(r"\D", "", raw.lstrip("+1"))
                else:
                    assert truth == ""

    def test_ground_truth_shirts_canonical(self):
        fixture = generate_fixture(0, 51)
        for profile in fixture.profiles:
            truth = profile.ground_truth["T-shirt size"]
            assert truth in SHIRT_SIZES
            assert profile.values["T-shirt size"] in SHIRT_ALIASES[truth]

    def test_ratios_configurable(self):
        fixture = generate_fixture(0, 20, mobile_ratio=1.0, phone_ratio=0.0)
        assert all(p.values["Mobile"] for p in fixture.profiles)
        assert not any(p.values["Phone"] for p in fixture.profiles)

    def test_source_format_pool_has_required_shapes(self):
        digits = "5105550000"
        rendered = {
            name: template.format(a=digits[0:3], b=digits[3:6], c=digits[6:10])
            for name, template in PHONE_FORMATS
        }
        assert rendered["plain"] == "5105550000"
        assert rendered["dashed"] == "510-555-0000"
        assert rendered["dotted"] == "510.555.0000"
        assert rendered["country"] == "+1 (510) 555-0000"
        assert rendered["tight_parens"] == "(510)555-0000"
        assert canonical_phone(digits) == "(510) 555-0000"
        # no source format already matches the canonical target
        assert not any(CANONICAL_RE.match(v) for v in rendered.values())

    def test_round_trip_file(self, tmp_path):
        fixture = generate_fixture(5, 12)
        path = str(tmp_path / "fixture.json")
        fixture.save(path)
        assert DataFormattingFixture.load(path).to_dict() == fixture.to_dict()

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            generate_fixture(0, 0)


def _verdict(kind, text=None, provenance="primary_request"):
    return Verdict(kind=kind, text=text, provenance=provenance)


def _profile(pid, phone, mobile, shirt, shirt_truth):
    values = {
        "First name": f"F{pid}",
        "Last name": f"L{pid}",
        "Phone": phone,
        "Mobile": mobile,
        "T-shirt size": shirt,
    }
    truth = {
        "Phone": canonical_phone(re.sub(r"\D", "", phone)[-10:]) if phone else "",
        "Mobile": canonical_phone(re.sub(r"\D", "", mobile)[-10:]) if mobile else "",
        "T-shirt size": shirt_truth,
    }
    return MemberProfile(profile_id=pid, values=values, ground_truth=truth)


def _record(profile, order, **verdicts):
    full = {
        fid: verdicts.get(fid, _verdict("no_change"))
        for fid in FIELD_IDS.values()
    }
    return InvocationRecord(
        profile_id=profile.profile_id,
        order_index=order,
        suggestions=SuggestionSet(verdicts=full),
    )


class TestScoreRun:
    def setup_method(self):
        self.p_both = _profile("p1", "5105550000", "510-555-1111", "small", "S")
        self.p_mobile = _profile("p2", "", "510.555.2222", "M", "M")
        self.p_none = _profile("p3", "", "", "Large", "L")
        self.fixture = DataFormattingFixture(
            seed=0, profiles=[self.p_both, self.p_mobile, self.p_none]
        )

    def test_both_phones_must_be_correct(self):
        log = SessionLog(
            fixture_seed=0,
            records=[
                _record(
                    self.p_both, 0,
                    phone=_verdict("suggest", "(510) 555-0000"),
                    mobile=_verdict("suggest", "(999) 999-9999"),  # wrong
                )
            ],
        )
        grid = score_run(log, self.fixture)
        assert grid.cells[0].phone_outcome == "incorrect"

        log.records[0].suggestions.verdicts["mobile"] = _verdict(
            "suggest", "(510) 555-1111"
        )
        grid = score_run(log, self.fixture)
        assert grid.cells[0].phone_outcome == "correct"

    def test_single_phone_profile_needs_only_that_field(self):
        log = SessionLog(
            fixture_seed=0,
            records=[_record(self.p_mobile, 0, mobile=_verdict("suggest", "(510) 555-2222"))],
        )
        grid = score_run(log, self.fixture)
        assert grid.cells[0].phone_outcome == "correct"

    def test_no_phone_profile_not_applicable(self):
        log = SessionLog(fixture_seed=0, records=[_record(self.p_none, 0)])
        grid = score_run(log, self.fixture)
        assert grid.cells[0].phone_outcome == "not_applicable"
        assert grid.phone_success_ratio is None

    def test_missing_needed_suggestion_is_no_suggestion(self):
        log = SessionLog(fixture_seed=0, records=[_record(self.p_mobile, 0)])
        grid = score_run(log, self.fixture)
        assert grid.cells[0].phone_outcome == "no_suggestion"

    def test_overeager_phone_on_blank_field_is_incorrect(self):
        # a known failure shape: duplicating a number into a blank field
        log = SessionLog(
            fixture_seed=0,
            records=[
                _record(
                    self.p_mobile, 0,
                    phone=_verdict("suggest", "(510) 555-2222"),
                    mobile=_verdict("suggest", "(510) 555-2222"),
                )
            ],
        )
        grid = score_run(log, self.fixture)
        assert grid.cells[0].phone_outcome == "incorrect"
        assert grid.overeager_suggestions == 1

    def test_first_invocation_only(self):
        right = _record(self.p_mobile, 0)
        right.suggestions.verdicts["mobile"] = _verdict("suggest", "(510) 555-2222")
        wrong_later = _record(self.p_mobile, 1, mobile=_verdict("suggest", "(000) 000-0000"))
        grid = score_run(SessionLog(0, [right, wrong_later]), self.fixture)
        assert len(grid.cells) == 1
        assert grid.cells[0].phone_outcome == "correct"

    def test_shirt_tallied_separately(self):
        log = SessionLog(
            fixture_seed=0,
            records=[
                _record(self.p_both, 0, tshirt_size=_verdict("suggest", "S")),
                _record(self.p_mobile, 1),  # shirt already canonical: M
                _record(self.p_none, 2, tshirt_size=_verdict("suggest", "XL")),  # wrong
            ],
        )
        grid = score_run(log, self.fixture)
        assert [c.shirt_outcome for c in grid.cells] == [
            "correct", "not_applicable", "incorrect",
        ]
        assert grid.shirt_success_ratio == 0.5

    def test_unknown_profile_is_scoring_error(self):
        stranger = _profile("ghost", "", "", "S", "S")
        log = SessionLog(fixture_seed=0, records=[_record(stranger, 0)])
        with pytest.raises(ScoringError):
            score_run(log, self.fixture)

    def test_verdict_coverage_mismatch_is_scoring_error(self):
        record = _record(self.p_none, 0)
        del record.suggestions.verdicts["phone"]
        with pytest.raises(ScoringError):
            score_run(SessionLog(0, [record]), self.fixture)

    def test_scoring_is_idempotent(self):
        log = SessionLog(fixture_seed=0, records=[_record(self.p_both, 0)])
        first = score_run(log, self.fixture)
        second = score_run(log, self.fixture)
        assert first.cells == second.cells
        assert first.to_csv() == second.to_csv()

    def test_fallback_contribution_counted(self):
        record = _record(
            self.p_mobile, 0,
            mobile=_verdict("suggest", "(510) 555-2222", provenance="fallback_request"),
        )
        record.suggestions.fallback_contributed = True
        grid = score_run(SessionLog(0, [record]), self.fixture)
        assert grid.fallback_contribution == 1


class TestGridCsv:
    def test_round_trip_lossless(self):
        grid = SuccessGrid(
            run_id="seed-7",
            cells=[
                GridCell("member-001", 0, "correct", "not_applicable"),
                GridCell("member-002", 1, "incorrect", "correct", accepted_incorrect=True),
                GridCell("member-003", 2, "not_applicable", "no_suggestion"),
            ],
        )
        parsed = SuccessGrid.from_csv(grid.to_csv())
        assert parsed.run_id == grid.run_id
        assert parsed.cells == grid.cells
        assert parsed.to_csv() == grid.to_csv()


class TestEndToEnd:
    def test_oracle_run_fully_correct_multiple_seeds(self, tmp_path):
        for seed in (0, 1, 2):
            fixture = generate_fixture(seed, 12)
            log = run_replay(fixture, fixture.oracle_backend(), str(tmp_path / f"s{seed}"))
            grid = score_run(log, fixture, run_id=f"seed-{seed}")
            assert len(grid.cells) == 12
            applicable = [c for c in grid.cells if c.phone_outcome != "not_applicable"]
            assert all(c.phone_outcome == "correct" for c in applicable)
            shirts = [c for c in grid.cells if c.shirt_outcome != "not_applicable"]
            assert all(c.shirt_outcome == "correct" for c in shirts)

    def test_all_false_backend_yields_no_suggestions(self, tmp_path):
        fixture = generate_fixture(4, 8)
        log = run_replay(fixture, AllFalseBackend(), str(tmp_path / "nf"))
        grid = score_run(log, fixture)
        for cell in grid.cells:
            assert cell.phone_outcome in ("no_suggestion", "not_applicable")
            assert cell.shirt_outcome in ("no_suggestion", "not_applicable")
        assert grid.overeager_suggestions == 0

    def test_examples_accumulate_during_run(self, tmp_path):
        fixture = generate_fixture(6, 5)
        state_dir = str(tmp_path / "acc")
        run_replay(fixture, fixture.oracle_backend(), state_dir)
        from formfill.session_service import SessionService

        service = SessionService(state_dir, AllFalseBackend())
        import os

        session_files = os.listdir(os.path.join(state_dir, "sessions"))
        assert len(session_files) == 1
        sid = session_files[0].removesuffix(".json")
        service.handle_message({"type": "hello", "site_key": "x", "session": sid})
        assert len(service.sessions[sid].store.bag.examples) == 5

    def test_log_round_trip(self, tmp_path):
        fixture = generate_fixture(9, 4)
        log = run_replay(fixture, fixture.oracle_backend(), str(tmp_path / "rt"))
        parsed = SessionLog.from_dict(log.to_dict())
        assert parsed.to_dict() == log.to_dict()
