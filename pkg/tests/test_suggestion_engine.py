import itertools
import json

import pytest

from formfill.context_store import ContextStore
from formfill.errors import (
    InvocationError,
    MalformedResponseError,
    TransportError,
)
from formfill.form_model import apply_update, edits_view
from formfill.llm_gateway import ChatRequest
from formfill.prompt_builder import PromptKeying, build_prompt
from formfill.suggestion_engine import (
    NO_CHANGE,
    SUGGEST,
    CompletionCache,
    SuggestionEngine,
    SuggestionSet,
    extract_json_object,
    normalize,
    parse_response,
)

from conftest import (
    FailingBackend,
    SequenceBackend,
    StaticBackend,
    every_key_response,
    make_snapshot,
)


def _keying(snapshot):
    return PromptKeying.for_view(edits_view(snapshot))


class TestExtractJsonObject:
    def test_bare_object(self):
        assert extract_json_object('{"a": false}') == {"a": False}

    def test_prose_wrapped_object(self):
        raw = 'Sure! Here is the JSON you asked for:\n{"Phone": "x"}\nHope that helps.'
        assert extract_json_object(raw) == {"Phone": "x"}

    def test_first_of_multiple_objects(self):
        assert extract_json_object('{"a": "1"} {"b": "2"}') == {"a": "1"}

    def test_braces_inside_strings_ignored(self):
        raw = '{"a": "curly } brace { soup"}'
        assert extract_json_object(raw) == {"a": "curly } brace { soup"}

    def test_unbalanced_then_valid(self):
        assert extract_json_object('{oops} {"a": false}') == {"a": False}

    def test_no_object_raises(self):
        with pytest.raises(MalformedResponseError):
            extract_json_object("no json here")

    def test_array_alone_raises(self):
        with pytest.raises(MalformedResponseError):
            extract_json_object('["a", "b"]')


class TestParseResponse:
    def setup_method(self):
        self.snapshot = make_snapshot()  # fields: Phone, City
        self.keying = _keying(self.snapshot)

    def test_string_and_false_verdicts(self):
        raw = '{"Phone": "(510) 555-0000", "City": false}'
        assert parse_response(raw, self.keying) == {
            "Phone": "(510) 555-0000",
            "City": False,
        }

    def test_empty_object_defaults_all_no_change(self):
        assert parse_response("{}", self.keying) == {"Phone": False, "City": False}

    def test_missing_key_defaults_no_change(self):
        assert parse_response('{"Phone": "x"}', self.keying) == {
            "Phone": "x",
            "City": False,
        }

    @pytest.mark.parametrize(
        "value", ["5", "true", "null", "1.5", '["a"]', '{"v": "x"}', "0"]
    )
    def test_non_string_non_false_values_rejected(self, value):
        with pytest.raises(MalformedResponseError):
            parse_response(f'{{"Phone": {value}}}', self.keying)

    def test_unknown_keys_rejected(self):
        with pytest.raises(MalformedResponseError) as err:
            parse_response('{"Phone": false, "Fax": "x"}', self.keying)
        assert "Fax" in str(err.value)

    def test_empty_string_is_a_suggestion(self):
        assert parse_response('{"Phone": "", "City": false}', self.keying) == {
            "Phone": "",
            "City": False,
        }

    def test_unparsable_raises(self):
        with pytest.raises(MalformedResponseError):
            parse_response("the model rambled with no JSON", self.keying)


class TestNormalize:
    def test_suggestion_equal_to_current_becomes_no_change(self):
        snapshot = make_snapshot(fields=[("city", "City", "Berkeley")])
        keying = _keying(snapshot)
        verdicts = normalize(
            {"City": "Berkeley"}, keying, snapshot.current_values(), "primary_request"
        )
        assert verdicts["city"].kind == NO_CHANGE

    def test_trailing_whitespace_still_suggests(self):
        snapshot = make_snapshot(fields=[("city", "City", "Berkeley")])
        keying = _keying(snapshot)
        verdicts = normalize(
            {"City": "Berkeley "}, keying, snapshot.current_values(), "primary_request"
        )
        assert verdicts["city"].kind == SUGGEST
        assert verdicts["city"].text == "Berkeley "

    def test_all_false_stays_no_change(self):
        snapshot = make_snapshot()
        keying = _keying(snapshot)
        verdicts = normalize(
            {"Phone": False, "City": False},
            keying,
            snapshot.current_values(),
            "fallback_request",
        )
        assert all(v.kind == NO_CHANGE for v in verdicts.values())
        assert all(v.provenance == "fallback_request" for v in verdicts.values())


def _edited_snapshot():
    snapshot = make_snapshot(fields=[("f1", "F1", "init1"), ("f2", "F2", "init2")])
    apply_update(snapshot, "f1", "cur1")  # ensures the dual request fires
    return snapshot


class TestDualRequestMerge:
    def test_no_edits_single_upstream_request(self):
        snapshot = make_snapshot()
        backend = StaticBackend(every_key_response(Phone=False, City=False))
        engine = SuggestionEngine(backend)
        result = engine.invoke(ContextStore().bag, snapshot)
        assert backend.calls == 1
        assert all(v.kind == NO_CHANGE for v in result.verdicts.values())
        assert result.degraded is None

    def test_edits_issue_two_requests(self):
        snapshot = _edited_snapshot()
        backend = SequenceBackend(
            with_edits=every_key_response(F1=False, F2=False),
            without_edits=every_key_response(F1=False, F2=False),
        )
        engine = SuggestionEngine(backend)
        engine.invoke(ContextStore().bag, snapshot)
        assert backend.calls == 2

    def test_fallback_fills_only_gaps(self):
        snapshot = _edited_snapshot()
        backend = SequenceBackend(
            with_edits=every_key_response(F1="primary-1", F2=False),
            without_edits=every_key_response(F1="fallback-1", F2="fallback-2"),
        )
        engine = SuggestionEngine(backend)
        result = engine.invoke(ContextStore().bag, snapshot)
        assert result.verdicts["f1"].text == "primary-1"
        assert result.verdicts["f1"].provenance == "primary_request"
        assert result.verdicts["f2"].text == "fallback-2"
        assert result.verdicts["f2"].provenance == "fallback_request"
        assert result.fallback_contributed is True

    def test_exhaustive_two_field_verdict_matrix(self):
        """All 81 combinations of {new-text, echo-current, false} per field/side."""
        options = ("new", "echo", "false")
        current = {"f1": "cur1", "f2": "init2"}

        def encode(option, side, fid):
            if option == "new":
                return f"{side}-{fid}"
            if option == "echo":
                return current[fid]
            return False

        cases = 0
        for a1, a2, b1, b2 in itertools.product(options, repeat=4):
            snapshot = _edited_snapshot()
            resp_a = every_key_response(
                F1=encode(a1, "alpha", "f1"), F2=encode(a2, "alpha", "f2")
            )
            resp_b = every_key_response(
                F1=encode(b1, "beta", "f1"), F2=encode(b2, "beta", "f2")
            )
            backend = SequenceBackend(with_edits=resp_a, without_edits=resp_b)
            engine = SuggestionEngine(backend)
            result = engine.invoke(ContextStore().bag, snapshot)

            for fid, a_opt, b_opt in (("f1", a1, b1), ("f2", a2, b2)):
                verdict = result.verdicts[fid]
                if a_opt == "new":
                    assert verdict.kind == SUGGEST
                    assert verdict.text == f"alpha-{fid}"
                    assert verdict.provenance == "primary_request"
                elif b_opt == "new":
                    assert verdict.kind == SUGGEST
                    assert verdict.text == f"beta-{fid}"
                    assert verdict.provenance == "fallback_request"
                else:
                    assert verdict.kind == NO_CHANGE
            expected_fallback = any(
                a_opt != "new" and b_opt == "new"
                for a_opt, b_opt in ((a1, b1), (a2, b2))
            )
            assert result.fallback_contributed is expected_fallback
            cases += 1
        assert cases == 81

    def test_all_false_both_sides(self):
        snapshot = _edited_snapshot()
        backend = SequenceBackend(
            with_edits=every_key_response(F1=False, F2=False),
            without_edits=every_key_response(F1=False, F2=False),
        )
        result = SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        assert all(v.kind == NO_CHANGE for v in result.verdicts.values())
        assert result.fallback_contributed is False

    def test_empty_form_rejected(self):
        snapshot = make_snapshot(fields=[("a", "A", "")])
        snapshot.fields.clear()
        with pytest.raises(InvocationError):
            SuggestionEngine(StaticBackend("{}")).invoke(ContextStore().bag, snapshot)


class _SplitBackend:
    """Fails or misbehaves on one side of the dual request."""

    kind = "split"

    def __init__(self, with_edits, without_edits):
        self.with_edits = with_edits
        self.without_edits = without_edits
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        doc = json.loads(request.messages[-1].content)
        has_updates = any(
            "updates by user" in entry for entry in doc["form fields"].values()
        )
        action = self.with_edits if has_updates else self.without_edits
        if isinstance(action, Exception):
            raise action
        return action


class TestDegradation:
    def test_primary_failure_promotes_fallback(self):
        snapshot = _edited_snapshot()
        backend = _SplitBackend(
            with_edits=TransportError("boom"),
            without_edits=every_key_response(F1="rescued", F2=False),
        )
        result = SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        assert result.degraded is not None and "primary" in result.degraded
        assert result.verdicts["f1"].text == "rescued"
        assert result.verdicts["f1"].provenance == "fallback_request"

    def test_fallback_failure_keeps_primary(self):
        snapshot = _edited_snapshot()
        backend = _SplitBackend(
            with_edits=every_key_response(F1="kept", F2=False),
            without_edits=TransportError("boom"),
        )
        result = SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        assert result.degraded is not None and "fallback" in result.degraded
        assert result.verdicts["f1"].text == "kept"
        assert result.verdicts["f1"].provenance == "primary_request"

    def test_malformed_primary_falls_back_to_other_parse(self):
        snapshot = _edited_snapshot()
        backend = _SplitBackend(
            with_edits="not json at all",
            without_edits=every_key_response(F1="salvaged", F2=False),
        )
        result = SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        assert result.verdicts["f1"].text == "salvaged"
        assert result.degraded is not None

    def test_both_failures_raise_with_causes(self):
        snapshot = _edited_snapshot()
        backend = _SplitBackend(
            with_edits=TransportError("a down"),
            without_edits=TransportError("b down"),
        )
        with pytest.raises(InvocationError) as err:
            SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        assert len(err.value.causes) == 2

    def test_single_request_failure_raises(self):
        snapshot = make_snapshot()
        backend = FailingBackend(TransportError("down"))
        with pytest.raises(InvocationError) as err:
            SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        assert len(err.value.causes) == 1


class TestCache:
    def test_repeat_invocation_hits_cache(self):
        snapshot = make_snapshot()
        backend = StaticBackend(every_key_response(Phone=False, City=False))
        engine = SuggestionEngine(backend)
        first = engine.invoke(ContextStore().bag, snapshot)
        second = engine.invoke(ContextStore().bag, snapshot)
        assert backend.calls == 1
        assert first.to_dict() == second.to_dict()

    def test_single_character_difference_misses(self):
        snapshot = make_snapshot()
        backend = StaticBackend(every_key_response(Phone=False, City=False))
        engine = SuggestionEngine(backend)
        store = ContextStore()
        store.add_manual("context A")
        engine.invoke(store.bag, snapshot)
        store2 = ContextStore()
        store2.add_manual("context B")
        engine.invoke(store2.bag, snapshot)
        assert backend.calls == 2

    def test_failure_not_cached_then_retry_calls_again(self):
        snapshot = make_snapshot()
        backend = FailingBackend(TransportError("down"))
        engine = SuggestionEngine(backend)
        with pytest.raises(InvocationError):
            engine.invoke(ContextStore().bag, snapshot)
        assert backend.calls == 1
        working = StaticBackend(every_key_response(Phone=False, City=False))
        engine.backend = working
        engine.invoke(ContextStore().bag, snapshot)
        assert working.calls == 1  # nothing was negatively cached

    def test_cache_persists_to_disk(self, tmp_path):
        path = str(tmp_path / "cache.json")
        snapshot = make_snapshot()
        backend = StaticBackend(every_key_response(Phone=False, City=False))
        engine = SuggestionEngine(backend, cache=CompletionCache(path))
        engine.invoke(ContextStore().bag, snapshot)
        assert backend.calls == 1

        reloaded = SuggestionEngine(backend, cache=CompletionCache(path))
        reloaded.invoke(ContextStore().bag, snapshot)
        assert backend.calls == 1  # served from the persisted cache


class TestSuggestionSetSerialization:
    def test_round_trip(self):
        snapshot = _edited_snapshot()
        backend = SequenceBackend(
            with_edits=every_key_response(F1="a", F2=False),
            without_edits=every_key_response(F1=False, F2="b"),
        )
        result = SuggestionEngine(backend).invoke(ContextStore().bag, snapshot)
        round_tripped = SuggestionSet.from_dict(result.to_dict())
        assert round_tripped.to_dict() == result.to_dict()
