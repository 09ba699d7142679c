"""Exception types shared across the package."""


class LexhopError(Exception):
    """Base class for all package errors."""


class InvalidFieldError(LexhopError, ValueError):
    """A required field is empty or malformed."""


class CorpusParseError(LexhopError):
    """A corpus record could not be parsed; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class DuplicateProvisionError(LexhopError):
    """Two corpus records canonicalize to the same id."""

    def __init__(self, provision_id: str, first_line: int, second_line: int):
        super().__init__(
            f"duplicate provision id {provision_id!r}: lines {first_line} and {second_line}"
        )
        self.provision_id = provision_id
        self.first_line = first_line
        self.second_line = second_line


class ProvisionNotFoundError(LexhopError, KeyError):
    """Lookup of an id that was never ingested."""


class BackendUnavailableError(LexhopError):
    """Transport to a backend failed after exhausting retries."""


class ProtocolError(LexhopError):
    """A remote service replied with something structurally invalid."""


class FixtureMissError(LexhopError):
    """The mock backend has no scripted response for a request digest."""


class UnsupportedBackendError(LexhopError):
    """The backend cannot satisfy a required capability (e.g. logprobs)."""


class DatasetError(LexhopError):
    """A benchmark file violates the instance schema or its invariants."""


class JoinError(LexhopError):
    """A result record does not join to any dataset instance."""


class RunFailure(LexhopError):
    """A batch run produced zero successful instances."""
