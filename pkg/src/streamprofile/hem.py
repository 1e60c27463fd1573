"""Hierarchical evidence memory: per-dimension storage with dedup.

New evidence lands in its dimension only when its insight stays below
the bigram-Jaccard similarity threshold against everything already
stored there (strict ``<``; an exact-threshold pair is rejected and
logged).  Entries keep full provenance: source utterance, window,
timestamps, emotion.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import CorruptDump, UnknownDimension
from .schema import EvidenceTuple, Schema, nfc

logger = logging.getLogger(__name__)


def _bigrams(text: str) -> frozenset:
    normalized = nfc(text)
    return frozenset(normalized[i : i + 2] for i in range(len(normalized) - 1))


def bigram_jaccard(s1: str, s2: str) -> float:
    """Jaccard similarity of the character-bigram sets of two strings.

    Bigrams are consecutive Unicode characters after NFC normalization.
    Two strings too short to form any bigram count as duplicates (1.0);
    if only one side is degenerate the similarity is 0.0.
    """
    b1, b2 = _bigrams(s1), _bigrams(s2)
    if not b1 and not b2:
        return 1.0
    if not b1 or not b2:
        return 0.0
    return len(b1 & b2) / len(b1 | b2)


@dataclass(frozen=True)
class HemEntry:
    id: str
    tuple: EvidenceTuple
    accepted_at: int
    max_similarity_at_insert: float


@dataclass(frozen=True)
class StoreResult:
    """Outcome of a store attempt: accepted entry or rejected duplicate."""

    accepted: bool
    entry: Optional[HemEntry] = None
    similarity: float = 0.0
    conflicting_id: Optional[str] = None

    @property
    def entry_id(self) -> Optional[str]:
        return self.entry.id if self.entry else None


class HierarchicalEvidenceMemory:
    """Single-writer, per-session evidence store organized by dimension."""

    def __init__(self, schema: Schema):
        self.schema = schema
        self.by_dimension: dict[str, list[HemEntry]] = {}
        self._next_id = 1

    def __len__(self) -> int:
        return sum(len(entries) for entries in self.by_dimension.values())

    def store(self, evidence: EvidenceTuple, threshold: float) -> StoreResult:
        """Accept the tuple unless a same-dimension insight is too similar.

        Acceptance requires max bigram-Jaccard similarity strictly below
        ``threshold``; the comparison runs over insights only.
        """
        self.schema.lookup(evidence.dimension_id)
        max_similarity = 0.0
        conflict: Optional[HemEntry] = None
        for existing in self.by_dimension.get(evidence.dimension_id, ()):
            similarity = bigram_jaccard(evidence.insight, existing.tuple.insight)
            if similarity > max_similarity:
                max_similarity = similarity
                conflict = existing
        if max_similarity >= threshold:
            if max_similarity == threshold:
                logger.info(
                    "insight at exact threshold %.3f rejected (dimension %s, vs %s)",
                    threshold,
                    evidence.dimension_id,
                    conflict.id,
                )
            return StoreResult(
                accepted=False, similarity=max_similarity, conflicting_id=conflict.id
            )
        entry = HemEntry(
            id=f"ev-{self._next_id}",
            tuple=evidence,
            accepted_at=evidence.window_index,
            max_similarity_at_insert=max_similarity,
        )
        self._next_id += 1
        self.by_dimension.setdefault(evidence.dimension_id, []).append(entry)
        return StoreResult(accepted=True, entry=entry, similarity=max_similarity)

    def retrieve(self, dimension_id: Optional[str] = None) -> list[HemEntry]:
        """All entries, schema dimension order then insertion order."""
        if dimension_id is not None:
            self.schema.lookup(dimension_id)
            return list(self.by_dimension.get(dimension_id, ()))
        out: list[HemEntry] = []
        for dim in self.schema.dimensions:
            out.extend(self.by_dimension.get(dim.id, ()))
        return out

    def get(self, entry_id: str) -> Optional[HemEntry]:
        for entries in self.by_dimension.values():
            for entry in entries:
                if entry.id == entry_id:
                    return entry
        return None

    def check_invariants(self, threshold: float) -> None:
        """Assert the within-dimension pairwise similarity bound; for tests."""
        for dim_id, entries in self.by_dimension.items():
            self.schema.lookup(dim_id)
            for i in range(len(entries)):
                for j in range(i + 1, len(entries)):
                    similarity = bigram_jaccard(entries[i].tuple.insight, entries[j].tuple.insight)
                    if similarity >= threshold:
                        raise AssertionError(
                            f"dimension {dim_id}: entries {entries[i].id} and {entries[j].id} "
                            f"have similarity {similarity:.3f} >= {threshold}"
                        )

    def to_dict(self) -> dict:
        """Dump document; every schema dimension keyed, schema order."""
        dimensions = {}
        for dim in self.schema.dimensions:
            dimensions[dim.id] = [
                {
                    "id": entry.id,
                    "dimension_id": entry.tuple.dimension_id,
                    "utterance": entry.tuple.utterance,
                    "insight": entry.tuple.insight,
                    "window_index": entry.tuple.window_index,
                    "t_start": entry.tuple.t_start,
                    "t_end": entry.tuple.t_end,
                    "emotion": entry.tuple.emotion,
                    "max_similarity_at_insert": entry.max_similarity_at_insert,
                }
                for entry in self.by_dimension.get(dim.id, ())
            ]
        return {"schema_id": self.schema.id, "dimensions": dimensions}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2) + "\n"

    def persist(self, sink: "str | Path") -> Path:
        path = Path(sink)
        path.write_text(self.dumps(), encoding="utf-8")
        return path

    @classmethod
    def from_dict(cls, doc: dict, schema: Schema) -> "HierarchicalEvidenceMemory":
        if not isinstance(doc, dict) or "dimensions" not in doc:
            raise CorruptDump("dump missing 'dimensions'")
        if doc.get("schema_id") != schema.id:
            raise CorruptDump(f"dump schema_id {doc.get('schema_id')!r} != {schema.id!r}")
        memory = cls(schema)
        max_seen = 0
        seen_ids = set()
        for dim_id, raw_entries in doc["dimensions"].items():
            if dim_id not in schema:
                raise CorruptDump(f"unknown dimension in dump: {dim_id!r}", position=dim_id)
            if not isinstance(raw_entries, list):
                raise CorruptDump("dimension value must be a list", position=dim_id)
            for i, raw in enumerate(raw_entries):
                position = f"{dim_id}[{i}]"
                try:
                    entry = HemEntry(
                        id=str(raw["id"]),
                        tuple=EvidenceTuple(
                            dimension_id=str(raw["dimension_id"]),
                            utterance=str(raw["utterance"]),
                            insight=str(raw["insight"]),
                            window_index=int(raw["window_index"]),
                            t_start=float(raw["t_start"]),
                            t_end=float(raw["t_end"]),
                            emotion=raw.get("emotion"),
                        ),
                        accepted_at=int(raw["window_index"]),
                        max_similarity_at_insert=float(raw["max_similarity_at_insert"]),
                    )
                except (KeyError, TypeError, ValueError) as exc:
                    raise CorruptDump(f"malformed entry: {exc}", position=position) from exc
                if entry.tuple.dimension_id != dim_id:
                    raise CorruptDump("entry stored under the wrong dimension", position=position)
                if entry.id in seen_ids:
                    raise CorruptDump(f"duplicate entry id {entry.id}", position=position)
                seen_ids.add(entry.id)
                if entry.id.startswith("ev-") and entry.id[3:].isdigit():
                    max_seen = max(max_seen, int(entry.id[3:]))
                memory.by_dimension.setdefault(dim_id, []).append(entry)
        memory._next_id = max_seen + 1
        return memory

    @classmethod
    def restore(cls, source: "str | Path", schema: Schema) -> "HierarchicalEvidenceMemory":
        path = Path(source)
        try:
            doc = json.loads(path.read_text("utf-8"))
        except json.JSONDecodeError as exc:
            raise CorruptDump(f"invalid JSON: {exc.msg}", position=f"char {exc.pos}") from exc
        except OSError as exc:
            raise CorruptDump(f"cannot read dump: {exc}") from exc
        return cls.from_dict(doc, schema)


def init_memory(schema: Schema) -> HierarchicalEvidenceMemory:
    return HierarchicalEvidenceMemory(schema)
