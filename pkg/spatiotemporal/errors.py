"""
Exception hierarchy for the spatio-temporal corpus pipeline.

Every error raised on purpose by the package derives from CorpusError so the
CLI can report it with the failing stage and exit non-zero.
"""

from __future__ import annotations


class CorpusError(Exception):
    """Base class for all pipeline errors."""


class ConfigError(CorpusError):
    """Invalid pipeline config or a referenced file that is missing or unreadable."""


# ---------------------------------------------------------------------------
# Ingest
# ---------------------------------------------------------------------------

class RecordError(CorpusError, ValueError):
    """A single input line could not be turned into a TweetRecord."""

    def __init__(self, message: str, line_no: int = 0, source: str = "") -> None:
        self.line_no = line_no
        self.source = source
        where = f"{source}:{line_no}" if source else f"line {line_no}"
        super().__init__(f"{where}: {message}")


class MalformedRecord(RecordError):
    pass


class MissingField(RecordError):
    pass


class BadTimestamp(RecordError):
    pass


class BadWindow(CorpusError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Text processing
# ---------------------------------------------------------------------------

class EmptyScores(CorpusError, ValueError):
    pass


class ZeroCount(CorpusError, ValueError):
    """An n-gram references a unigram with no count in the same month."""


# ---------------------------------------------------------------------------
# Locations
# ---------------------------------------------------------------------------

class UnknownRegion(CorpusError, LookupError):
    pass


# ---------------------------------------------------------------------------
# Time series and clustering
# ---------------------------------------------------------------------------

class EmptyWindow(CorpusError, ValueError):
    pass


class OutOfRange(CorpusError, ValueError):
    pass


class BadK(CorpusError, ValueError):
    pass


class BadAssignment(CorpusError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Salience and coding
# ---------------------------------------------------------------------------

class EmptyCorpus(CorpusError, ValueError):
    pass


class MissingLabel(CorpusError, ValueError):
    pass


class EmptyInput(CorpusError, ValueError):
    pass


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------

class StageError(CorpusError):
    """Wraps the first error raised inside a pipeline stage."""

    def __init__(self, stage: str, cause: BaseException) -> None:
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")
