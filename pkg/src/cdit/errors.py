"""Error taxonomy shared across the package.

Every failure the library raises on purpose derives from :class:`CditError`,
so callers (and the CLI exit-code mapping) can route on the class.
"""
from __future__ import annotations


class CditError(Exception):
    """Base class for all errors raised by this package."""


class InputError(CditError):
    """Bad input data or arguments (CLI exit code 2)."""


class MalformedRecord(InputError):
    """A JSONL record failed to parse or validate."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(InputError):
    def __init__(self, id: str):
        self.id = id
        super().__init__(f"duplicate id: {id!r}")


class DimensionMismatch(InputError):
    pass


class SelfPair(InputError):
    def __init__(self, id: str):
        self.id = id
        super().__init__(f"pair of an id with itself: {id!r}")


class EmptyAnswers(InputError):
    def __init__(self, message: str = "answers list is empty", line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyText(InputError):
    pass


class DegenerateVector(InputError):
    """Every token hashed to cancellation; the embedding would be all zeros."""


class EmptyCorpus(InputError):
    pass


class CorpusNotFound(InputError):
    """The configured corpus path does not exist."""


class NlistExceedsCorpus(InputError):
    pass


class EmptyIndex(InputError):
    pass


class UnknownId(InputError):
    def __init__(self, id: str):
        self.id = id
        super().__init__(f"id not in index: {id!r}")


class UnsupportedRuleSet(InputError):
    pass


class ExtractionUnsupported(InputError):
    """The judge backend cannot extract components for this sentence."""


class ExtractionUnparseable(InputError):
    """The extraction backend replied in a shape we cannot parse."""


class JudgeUnparseable(InputError):
    """The judge reply did not contain a usable true/false verdict."""


class SelfWitness(InputError):
    def __init__(self, id: str):
        self.id = id
        super().__init__(f"sentence {id!r} cannot witness against itself")


class EmptyInput(InputError):
    pass


class EmptyGolds(InputError):
    pass


class NeedAntonyms(InputError):
    pass


class RemoteUnavailable(CditError):
    """A remote endpoint (embedder or generator) failed (CLI exit code 1)."""


class JudgeUnavailable(CditError):
    """The judge endpoint failed (CLI exit code 1)."""


class IoError(CditError):
    """Filesystem-level failure while reading or writing an artifact."""


class CorruptIndex(CditError):
    """Index bytes failed checksum or structural validation (CLI exit code 3)."""


class TrimAborted(CditError):
    """A trim run stopped early; carries the offending query id and the
    partial report accumulated up to the failure."""

    def __init__(self, query_id: str, report, cause: Exception):
        self.query_id = query_id
        self.report = report
        self.cause = cause
        super().__init__(f"trim aborted at query {query_id!r}: {cause}")
