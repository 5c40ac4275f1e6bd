"""Exception types shared across the pipeline."""


class T2SError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(T2SError):
    """A database file could not be read or introspected."""


class SelectionError(T2SError):
    """A column selection references a table/column missing from the catalog."""


class EmbeddingError(T2SError):
    """An embedding provider call failed; callers may retry."""


class IndexBuildError(T2SError):
    """Value-index construction aborted; message carries partial progress."""


class GatewayError(T2SError):
    """LLM gateway failure after retries, or a missing scripted reply."""


class SqlSyntaxError(T2SError):
    """SQL text could not be parsed.

    Attributes:
        position: character offset of the offending token, or -1.
    """

    def __init__(self, message, position=-1):
        super().__init__(message)
        self.position = position


class CotParseError(T2SError):
    """A structured completion was missing its required #SQL section."""

    def __init__(self, message, raw_reply=""):
        super().__init__(message)
        self.raw_reply = raw_reply


class GenerationError(T2SError):
    """No candidate in a generation batch could be parsed."""


class VoteError(T2SError):
    """Vote called on an empty candidate pool."""


class BenchError(T2SError):
    """Dataset or report handling failure; message names the record."""
