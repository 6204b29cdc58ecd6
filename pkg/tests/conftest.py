import json

import pytest

from formfill.context_store import ContextBag, ContextStore
from formfill.form_model import FormSnapshot, sync_structure
from formfill.llm_gateway import ChatRequest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible pass/fail line per acceptance criterion."""
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and "test_acceptance" in str(item.fspath):
        doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
        status = "PASS" if report.passed else "FAIL"
        print(f"\n[acceptance] {status}: {doc}")


class StaticBackend:
    """Returns one canned response for every request, counting calls."""

    kind = "static"

    def __init__(self, response: str):
        self.response = response
        self.calls = 0
        self.requests: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        self.requests.append(request)
        return self.response


class SequenceBackend:
    """Returns responses keyed by how many user edits the prompt shows.

    The dual-request tests need different answers for the edits-visible and
    edits-suppressed prompts of one invocation; keying on the serialized
    prompt content keeps the backend deterministic.
    """

    kind = "sequence"

    def __init__(self, with_edits: str, without_edits: str):
        self.with_edits = with_edits
        self.without_edits = without_edits
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        doc = json.loads(request.messages[-1].content)
        has_updates = any(
            "updates by user" in entry for entry in doc["form fields"].values()
        )
        return self.with_edits if has_updates else self.without_edits


class FailingBackend:
    kind = "failing"

    def __init__(self, error: Exception):
        self.error = error
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        raise self.error


class AllFalseBackend:
    """Answers the every-key contract with false for whatever keys the prompt shows."""

    kind = "all_false"

    def __init__(self):
        self.calls = 0

    def complete(self, request: ChatRequest) -> str:
        self.calls += 1
        doc = json.loads(request.messages[-1].content)
        return json.dumps({key: False for key in doc["form fields"]})


def every_key_response(**verdicts) -> str:
    return json.dumps(verdicts, ensure_ascii=False)


def make_snapshot(site_key="https://forms.example", fields=None) -> FormSnapshot:
    if fields is None:
        fields = [("phone", "Phone", ""), ("city", "City", "")]
    return sync_structure(None, site_key, fields)


@pytest.fixture
def snapshot() -> FormSnapshot:
    return make_snapshot()


@pytest.fixture
def store() -> ContextStore:
    return ContextStore()


@pytest.fixture
def bag(store) -> ContextBag:
    return store.bag
