"""Clinical schema, dialogue data model, and session configuration.

The schema partitions a psychological profile into lettered modules
(Background, Health History, Social Relations, Self-Cognition, Current
State), each holding numbered dimensions such as ``B2`` (Self-harm Hx).
Dimensions flagged ``risk_priority`` get extraction priority downstream.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, SchemaError, UnknownDimension, VerbatimViolation, ZeroVector

_DIMENSION_ID = re.compile(r"^([A-Z])([1-9][0-9]*)$")

#: Roles a diarized segment can carry.
ROLE_COUNSELOR = "counselor"
ROLE_PATIENT = "patient"
ROLE_GUARDIAN = "guardian"
ROLE_UNKNOWN = "unknown"
ROLES = (ROLE_COUNSELOR, ROLE_PATIENT, ROLE_GUARDIAN, ROLE_UNKNOWN)


def nfc(text: str) -> str:
    """Unicode NFC normalization; all verbatim comparisons use this form."""
    return unicodedata.normalize("NFC", text)


@dataclass(frozen=True)
class SchemaModule:
    id: str
    name: str


@dataclass(frozen=True)
class Dimension:
    id: str
    module_id: str
    name: str
    risk_priority: bool = False


@dataclass(frozen=True)
class Schema:
    """Ordered profile schema: lettered modules, numbered dimensions."""

    id: str
    modules: tuple[SchemaModule, ...]
    dimensions: tuple[Dimension, ...]

    def __post_init__(self):
        module_ids = [m.id for m in self.modules]
        if len(set(module_ids)) != len(module_ids):
            raise SchemaError("duplicate module ids")
        for m in self.modules:
            if not re.fullmatch(r"[A-Z]", m.id):
                raise SchemaError(f"module id must be a single capital letter: {m.id!r}")
            if not m.name.strip():
                raise SchemaError(f"module {m.id} has an empty name")
        seen = set()
        for d in self.dimensions:
            match = _DIMENSION_ID.match(d.id)
            if not match:
                raise SchemaError(f"malformed dimension id: {d.id!r}")
            if match.group(1) != d.module_id:
                raise SchemaError(f"dimension {d.id} does not belong to module {d.module_id}")
            if d.module_id not in module_ids:
                raise SchemaError(f"dimension {d.id} references unknown module {d.module_id}")
            if d.id in seen:
                raise SchemaError(f"duplicate dimension id: {d.id}")
            if not d.name.strip():
                raise SchemaError(f"dimension {d.id} has an empty name")
            seen.add(d.id)
        if not self.dimensions:
            raise SchemaError("schema has no dimensions")

    @cached_property
    def _by_id(self) -> dict[str, Dimension]:
        return {d.id: d for d in self.dimensions}

    def lookup(self, dimension_id: str) -> Dimension:
        try:
            return self._by_id[dimension_id]
        except KeyError:
            raise UnknownDimension(dimension_id) from None

    def __contains__(self, dimension_id: str) -> bool:
        return dimension_id in self._by_id

    def dimensions_of(self, module_id: str) -> tuple[Dimension, ...]:
        return tuple(d for d in self.dimensions if d.module_id == module_id)

    @property
    def risk_dimensions(self) -> tuple[Dimension, ...]:
        return tuple(d for d in self.dimensions if d.risk_priority)


def dimension_lookup(schema: Schema, dimension_id: str) -> Dimension:
    """Resolve a dimension id; raises UnknownDimension for absent ids."""
    return schema.lookup(dimension_id)


def serialize_schema(schema: Schema) -> dict:
    """Schema -> plain document, inverse of load_schema."""
    return {
        "id": schema.id,
        "modules": [
            {
                "id": m.id,
                "name": m.name,
                "dimensions": [
                    {"id": d.id, "name": d.name, "risk_priority": d.risk_priority}
                    for d in schema.dimensions_of(m.id)
                ],
            }
            for m in schema.modules
        ],
    }


def load_schema(source: "dict | str | Path | None" = None) -> Schema:
    """Build a Schema from a document; with no source, the built-in default.

    Accepts a parsed dict, or a path to a JSON file shaped like
    ``data/default_schema.json``.
    """
    if source is None:
        doc = json.loads(
            resources.files("streamprofile").joinpath("data/default_schema.json").read_text("utf-8")
        )
    elif isinstance(source, dict):
        doc = source
    else:
        with open(source, encoding="utf-8") as fh:
            doc = json.load(fh)
    try:
        modules = []
        dimensions = []
        for m in doc["modules"]:
            modules.append(SchemaModule(id=m["id"], name=m["name"]))
            for d in m.get("dimensions", []):
                dimensions.append(
                    Dimension(
                        id=d["id"],
                        module_id=m["id"],
                        name=d["name"],
                        risk_priority=bool(d.get("risk_priority", False)),
                    )
                )
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed schema document: {exc}") from exc
    return Schema(id=str(doc.get("id", "unnamed")), modules=tuple(modules), dimensions=tuple(dimensions))


def unit_normalize(vector: Sequence[float]) -> np.ndarray:
    """Project a vector onto the unit sphere; ZeroVector on ~zero norm."""
    arr = np.asarray(vector, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("embedding must be a 1-D vector")
    norm = float(np.linalg.norm(arr))
    if norm < 1e-12:
        raise ZeroVector("cannot normalize a zero vector")
    return arr / norm


@dataclass(frozen=True)
class DialogueSegment:
    """One diarized, timestamped utterance.

    Utterances are NFC-normalized at construction so every later verbatim
    comparison sees one canonical form.  Embeddings, when present, are
    normalized to unit length.
    """

    utterance: str
    role: str = ROLE_UNKNOWN
    t_start: float = 0.0
    t_end: float = 0.0
    embedding: Optional[np.ndarray] = None
    emotion: Optional[str] = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role: {self.role!r}")
        if not (0 <= self.t_start <= self.t_end):
            raise ValueError(f"bad timestamps: [{self.t_start}, {self.t_end}]")
        text = nfc(self.utterance)
        if not text.strip():
            raise ValueError("utterance empty after whitespace trim")
        object.__setattr__(self, "utterance", text)
        if self.embedding is not None:
            object.__setattr__(self, "embedding", unit_normalize(self.embedding))

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def segment_to_dict(segment: DialogueSegment) -> dict:
    """Segment -> JSONL line object (the on-disk wire schema)."""
    return {
        "utterance": segment.utterance,
        "role": None if segment.role == ROLE_UNKNOWN else segment.role,
        "t_start": segment.t_start,
        "t_end": segment.t_end,
        "embedding": None if segment.embedding is None else [float(x) for x in segment.embedding],
        "emotion": segment.emotion,
    }


def segment_from_dict(obj: dict) -> DialogueSegment:
    return DialogueSegment(
        utterance=obj["utterance"],
        role=obj.get("role") or ROLE_UNKNOWN,
        t_start=float(obj["t_start"]),
        t_end=float(obj["t_end"]),
        embedding=obj.get("embedding"),
        emotion=obj.get("emotion"),
    )


@dataclass(frozen=True)
class DialogueWindow:
    """Segments falling inside one processing window of the stream."""

    index: int
    segments: tuple[DialogueSegment, ...]
    window_start: float
    window_end: float

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        starts = [s.t_start for s in self.segments]
        if starts != sorted(starts):
            raise ValueError("segments not sorted by t_start")
        for s in self.segments:
            if not (self.window_start <= s.t_start and s.t_end <= self.window_end):
                raise ValueError(
                    f"segment [{s.t_start}, {s.t_end}] outside window "
                    f"[{self.window_start}, {self.window_end}]"
                )

    @cached_property
    def text(self) -> str:
        """All utterances joined by newlines; the verbatim reference text."""
        return "\n".join(s.utterance for s in self.segments)

    @cached_property
    def _segment_spans(self) -> tuple[tuple[int, int], ...]:
        spans = []
        pos = 0
        for s in self.segments:
            spans.append((pos, pos + len(s.utterance)))
            pos += len(s.utterance) + 1  # +1 for the joining newline
        return tuple(spans)

    def covering_segments(self, utterance: str) -> tuple[DialogueSegment, ...]:
        """Segments whose text contains the (NFC) utterance, in order.

        Empty tuple when the utterance is not a verbatim substring.
        """
        needle = nfc(utterance)
        start = self.text.find(needle)
        if start < 0 or not needle:
            return ()
        end = start + len(needle)
        covered = [
            seg
            for seg, (a, b) in zip(self.segments, self._segment_spans)
            if a < end and start < b
        ]
        return tuple(covered)


@dataclass(frozen=True)
class EvidenceTuple:
    """(dimension, verbatim utterance, insight) with window provenance.

    Build these through :meth:`create`, which enforces the verbatim-copy
    rule against the source window and rejects unknown dimensions.
    """

    dimension_id: str
    utterance: str
    insight: str
    window_index: int
    t_start: float
    t_end: float
    emotion: Optional[str] = None

    @classmethod
    def create(
        cls,
        schema: Schema,
        window: DialogueWindow,
        dimension_id: str,
        utterance: str,
        insight: str,
        emotion: Optional[str] = None,
    ) -> "EvidenceTuple":
        schema.lookup(dimension_id)
        text = nfc(utterance)
        if not text.strip():
            raise VerbatimViolation("evidence utterance is empty")
        covered = window.covering_segments(text)
        if not covered:
            raise VerbatimViolation(
                f"utterance is not a verbatim substring of window {window.index}: {text[:80]!r}"
            )
        cleaned_insight = nfc(insight).strip()
        if not cleaned_insight:
            raise ValueError("insight must be non-empty")
        segment_emotion = next((s.emotion for s in covered if s.emotion), None)
        return cls(
            dimension_id=dimension_id,
            utterance=text,
            insight=cleaned_insight,
            window_index=window.index,
            t_start=covered[0].t_start,
            t_end=covered[-1].t_end,
            emotion=segment_emotion or emotion,
        )

    def validate_against(self, schema: Schema, window: DialogueWindow) -> None:
        """Re-check the construction invariants (defensive, e.g. after restore)."""
        schema.lookup(self.dimension_id)
        if window.index != self.window_index:
            raise VerbatimViolation("tuple validated against the wrong window")
        if not window.covering_segments(self.utterance):
            raise VerbatimViolation("utterance no longer matches the window text")
        if not self.insight.strip():
            raise ValueError("insight must be non-empty")


@dataclass(frozen=True)
class LlmParams:
    """Generation parameters shared by every LLM call of a session."""

    endpoint: str = ""
    model: str = ""
    temperature: float = 0.3
    max_tokens: int = 8192
    seed: int = 42
    api_key: Optional[str] = None
    # JSON path into the HTTP response body holding the completion text.
    response_path: tuple = ("choices", 0, "message", "content")

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ConfigError("max_tokens must be > 0")


@dataclass(frozen=True)
class SessionConfig:
    """Immutable per-session configuration; shareable across workers."""

    window_seconds: float = 300.0
    jaccard_threshold: float = 0.7
    speaker_counts: tuple[int, ...] = (2, 3)
    llm: LlmParams = field(default_factory=LlmParams)
    schema: Schema = field(default_factory=load_schema)
    history_max_chars: int = 8000
    llm_backend: str = "http"  # "http" | "mock"
    mock_dir: Optional[str] = None
    max_skipped_windows: Optional[int] = None

    def __post_init__(self):
        if self.window_seconds <= 0:
            raise ConfigError("window_seconds must be > 0")
        if not (0 < self.jaccard_threshold <= 1):
            raise ConfigError("jaccard_threshold must be in (0, 1]")
        counts = tuple(sorted(set(int(c) for c in self.speaker_counts)))
        if not counts or any(c < 2 for c in counts):
            raise ConfigError("speaker_counts must be a nonempty set of integers >= 2")
        object.__setattr__(self, "speaker_counts", counts)
        if self.history_max_chars < 0:
            raise ConfigError("history_max_chars must be >= 0")
        if self.llm_backend not in ("http", "mock"):
            raise ConfigError(f"unknown llm backend: {self.llm_backend!r}")
        if self.max_skipped_windows is not None and self.max_skipped_windows < 0:
            raise ConfigError("max_skipped_windows must be >= 0 or null")

    @property
    def seed(self) -> int:
        """Single session seed; all engine randomness derives from it."""
        return self.llm.seed


def load_config(source: "dict | str | Path", base_dir: Optional[Path] = None) -> SessionConfig:
    """Read a SessionConfig from a JSON document or file.

    Relative schema / mock-fixture paths resolve against the config file's
    directory.  ``STREAMPROFILE_LLM_ENDPOINT`` and
    ``STREAMPROFILE_LLM_API_KEY`` override the file's values.
    """
    import os

    if isinstance(source, dict):
        doc = dict(source)
        root = Path(base_dir) if base_dir else Path.cwd()
    else:
        path = Path(source)
        try:
            doc = json.loads(path.read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        root = path.parent

    def _resolve(p):
        p = Path(p)
        return p if p.is_absolute() else root / p

    llm_doc = dict(doc.get("llm", {}))
    endpoint = os.environ.get("STREAMPROFILE_LLM_ENDPOINT", llm_doc.get("endpoint", ""))
    api_key = os.environ.get("STREAMPROFILE_LLM_API_KEY", llm_doc.get("api_key"))
    response_path = tuple(llm_doc.get("response_path", ("choices", 0, "message", "content")))
    try:
        llm = LlmParams(
            endpoint=endpoint,
            model=llm_doc.get("model", ""),
            temperature=float(llm_doc.get("temperature", 0.3)),
            max_tokens=int(llm_doc.get("max_tokens", 8192)),
            seed=int(llm_doc.get("seed", 42)),
            api_key=api_key,
            response_path=response_path,
        )
        schema_src = doc.get("schema")
        schema = load_schema(_resolve(schema_src) if isinstance(schema_src, str) else schema_src)
        mock_dir = doc.get("mock_dir")
        return SessionConfig(
            window_seconds=float(doc.get("window_seconds", 300.0)),
            jaccard_threshold=float(doc.get("jaccard_threshold", 0.7)),
            speaker_counts=tuple(doc.get("speaker_counts", (2, 3))),
            llm=llm,
            schema=schema,
            history_max_chars=int(doc.get("history_max_chars", 8000)),
            llm_backend=doc.get("llm_backend", "http"),
            mock_dir=str(_resolve(mock_dir)) if mock_dir else None,
            max_skipped_windows=doc.get("max_skipped_windows"),
        )
    except (TypeError, ValueError, SchemaError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc


def window_texts(windows: Iterable[DialogueWindow]) -> str:
    """Full-transcript reference text used by grounding validation."""
    return "\n".join(w.text for w in windows if w.segments)
