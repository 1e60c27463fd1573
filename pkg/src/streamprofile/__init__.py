"""Streaming, evidence-grounded psychological profile generation.

Turns a diarized counseling-session segment stream into a structured
profile in which every claim cites verbatim source utterances, via
windowed clinical reasoning and a per-dimension evidence memory with
near-duplicate rejection.
"""

from .errors import StreamProfileError
from .schema import (
    DialogueSegment,
    DialogueWindow,
    Dimension,
    EvidenceTuple,
    LlmParams,
    Schema,
    SessionConfig,
    dimension_lookup,
    load_config,
    load_schema,
)

__version__ = "0.1.0"

__all__ = [
    "StreamProfileError",
    "DialogueSegment",
    "DialogueWindow",
    "Dimension",
    "EvidenceTuple",
    "LlmParams",
    "Schema",
    "SessionConfig",
    "dimension_lookup",
    "load_config",
    "load_schema",
    "__version__",
]
