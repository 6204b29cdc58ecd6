"""Exception types shared across the engine."""


class FormfillError(Exception):
    """Base class for all engine errors."""


class InvalidSelectionError(FormfillError):
    """Raised for empty or out-of-range text selections."""


class EmptyTextError(FormfillError):
    """Raised when manual context or a search query is empty."""


class EntryNotFoundError(FormfillError):
    """Raised when a scrapbook entry id does not exist."""


class FieldNotFoundError(FormfillError):
    """Raised when a form field id does not exist in the snapshot."""


class DuplicateFieldError(FormfillError):
    """Raised when a form sync carries duplicate field ids."""


class IncompleteExampleError(FormfillError):
    """Raised when saving an example whose final values do not cover the form."""


class CorruptStoreError(FormfillError):
    """Raised when a persisted session store cannot be loaded intact."""


class OverBudgetError(FormfillError):
    """Raised when a prompt cannot fit the token budget even after full pruning."""


class MalformedResponseError(FormfillError):
    """Raised when a model response violates the every-key output contract."""


class TransportError(FormfillError):
    """Raised on network failures talking to a remote completion API."""


class AuthError(TransportError):
    """Raised when the remote completion API rejects the credentials."""


class TranscriptMissError(FormfillError):
    """Raised when a scripted backend has no entry for a request digest."""


class InvocationError(FormfillError):
    """Raised when both requests of a dual invocation fail."""

    def __init__(self, message: str, causes: list[Exception] | None = None):
        super().__init__(message)
        self.causes = causes or []


class ProtocolError(FormfillError):
    """Raised for malformed or unknown wire-protocol messages."""

    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class ScoringError(FormfillError):
    """Raised when a replay log does not match its fixture."""
