"""Exception types shared across the engine."""


class StreamProfileError(Exception):
    """Base class for all engine errors."""


class SchemaError(StreamProfileError):
    """Malformed schema document (duplicate ids, bad module letters, ...)."""


class UnknownDimension(SchemaError):
    """A dimension id not present in the active schema."""

    def __init__(self, dimension_id: str):
        super().__init__(f"unknown dimension id: {dimension_id!r}")
        self.dimension_id = dimension_id


class ConfigError(StreamProfileError):
    """Invalid session configuration."""


class VerbatimViolation(StreamProfileError):
    """Evidence utterance is not an exact substring of its window text."""


class DimensionMismatch(StreamProfileError):
    """Vectors of unequal dimension."""


class ZeroVector(StreamProfileError):
    """A vector with (near-)zero norm where a direction is required."""


class TooFewPoints(StreamProfileError):
    """Fewer embedding points than requested clusters."""


class SingleCluster(StreamProfileError):
    """Silhouette requested for a labelling with one distinct cluster."""


class LlmUnavailable(StreamProfileError):
    """LLM backend unreachable after the retry budget."""


class MockMiss(StreamProfileError):
    """Scripted mock has no fixture for the requested (stage, window)."""

    def __init__(self, stage: str, window_index: int):
        super().__init__(f"no mock fixture for stage={stage!r} window={window_index}")
        self.stage = stage
        self.window_index = window_index


class ParseError(StreamProfileError):
    """LLM output violated the mandated grammar, even after one reprompt."""


class EmptyWindow(StreamProfileError):
    """Analysis requested for a window with no segments."""


class UnorderedSource(StreamProfileError):
    """Segment stream with decreasing start timestamps."""


class SourceError(StreamProfileError):
    """Session source unreadable or malformed."""


class CorruptDump(StreamProfileError):
    """Persisted artifact cannot be restored."""

    def __init__(self, message: str, position: object = None):
        super().__init__(message if position is None else f"{message} (at {position})")
        self.position = position


class EmbedderUnavailable(StreamProfileError):
    """Embedding service unreachable or returned a malformed payload."""


class EmptyInput(StreamProfileError):
    """An aggregate requested over zero rows."""
