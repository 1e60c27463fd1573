"""Session loop: windowing, per-cycle processing, finalization.

A session is one strictly sequential pass: cut the ordered segment
stream into fixed-length windows, run analysis + extraction + storage
per window, checkpoint after every cycle, then close with a global
re-clustering pass, profile synthesis, and grounding validation.
Windows that fail at the LLM boundary are logged and skipped; the
session keeps going.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .cot import EvidenceBatch, HistoryBuffer, analyze_window, append_history, extract_evidence
from .diarize import EmbeddingSet, GlobalReclusterResult, global_recluster
from .errors import (
    CorruptDump,
    EmptyWindow,
    LlmUnavailable,
    MockMiss,
    ParseError,
    SourceError,
    TooFewPoints,
    UnorderedSource,
)
from .hem import HierarchicalEvidenceMemory
from .llm import LlmClient
from .schema import (
    DialogueSegment,
    DialogueWindow,
    SessionConfig,
    segment_from_dict,
    segment_to_dict,
    unit_normalize,
)
from .synthesis import (
    GroundingReport,
    Profile,
    grounding_to_dict,
    render_profile,
    synthesize_profile,
    validate_grounding,
)

logger = logging.getLogger(__name__)

KIND_REPLAY = "replay-file"
KIND_LIVE = "live-stream"

_SKIPPABLE = (LlmUnavailable, MockMiss, ParseError, EmptyWindow)


@dataclass
class SessionSource:
    """Ordered segment stream, from a replay file or a live line feed.

    ``replay_speed`` > 0 paces iteration against the wall clock at that
    multiple of real time; 0 replays as fast as possible.  Pacing only
    affects timing, never content.
    """

    kind: str
    segments: Iterable[DialogueSegment]
    replay_speed: float = 0.0

    @classmethod
    def from_jsonl(cls, path: "str | Path", replay_speed: float = 0.0) -> "SessionSource":
        return cls(kind=KIND_REPLAY, segments=_read_jsonl(Path(path)), replay_speed=replay_speed)

    @classmethod
    def from_lines(cls, lines: Iterable[str], kind: str = KIND_LIVE) -> "SessionSource":
        return cls(kind=kind, segments=_parse_lines(lines))

    def __iter__(self) -> Iterator[DialogueSegment]:
        previous = None
        for segment in self.segments:
            if previous is not None:
                if segment.t_start < previous:
                    raise UnorderedSource(
                        f"t_start decreased from {previous} to {segment.t_start}"
                    )
                if self.replay_speed > 0:
                    time.sleep((segment.t_start - previous) / self.replay_speed)
            previous = segment.t_start
            yield segment


def _read_jsonl(path: Path) -> Iterator[DialogueSegment]:
    try:
        handle = open(path, encoding="utf-8")
    except OSError as exc:
        raise SourceError(f"cannot open source {path}: {exc}") from exc
    with handle:
        yield from _parse_lines(handle)


def _parse_lines(lines: Iterable[str]) -> Iterator[DialogueSegment]:
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            yield segment_from_dict(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SourceError(f"bad segment at line {lineno}: {exc}") from exc


def window_stream(source: Iterable[DialogueSegment], window_seconds: float) -> Iterator[DialogueWindow]:
    """Cut the stream into consecutive windows of fixed nominal length.

    A segment belongs to the window containing its t_start; a straddling
    segment stretches its window's end rather than being split, keeping
    utterances verbatim-intact.  Windows with no segments are still
    emitted so indices stay aligned with stream time.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be > 0")
    current = 0
    bucket: list[DialogueSegment] = []

    def _close(index: int, segments: list[DialogueSegment]) -> DialogueWindow:
        nominal_end = (index + 1) * window_seconds
        end = max([nominal_end] + [s.t_end for s in segments])
        return DialogueWindow(
            index=index, segments=tuple(segments), window_start=index * window_seconds, window_end=end
        )

    emitted_any = False
    for segment in source:
        index = int(math.floor(segment.t_start / window_seconds))
        while index > current:
            yield _close(current, bucket)
            emitted_any = True
            bucket = []
            current += 1
        bucket.append(segment)
    if bucket or emitted_any:
        yield _close(current, bucket)


@dataclass
class SessionState:
    """Everything one session mutates while its loop runs."""

    config: SessionConfig
    client: LlmClient
    memory: HierarchicalEvidenceMemory
    history: HistoryBuffer
    windows_processed: int = 0
    skipped: list = field(default_factory=list)  # (window_index, reason)
    accepted: int = 0
    rejected_duplicates: int = 0
    dropped_items: int = 0
    _embeddings: list = field(default_factory=list)      # vectors
    _embedding_refs: list = field(default_factory=list)  # (window, segment)
    _embedding_durations: list = field(default_factory=list)

    @classmethod
    def fresh(cls, config: SessionConfig, client: LlmClient) -> "SessionState":
        return cls(
            config=config,
            client=client,
            memory=HierarchicalEvidenceMemory(config.schema),
            history=HistoryBuffer(max_chars=config.history_max_chars),
        )

    def accumulate_embeddings(self, window: DialogueWindow) -> None:
        for i, segment in enumerate(window.segments):
            if segment.embedding is not None:
                self._embeddings.append(segment.embedding)
                self._embedding_refs.append((window.index, i))
                self._embedding_durations.append(segment.duration)

    def embedding_set(self) -> Optional[EmbeddingSet]:
        if not self._embeddings:
            return None
        return EmbeddingSet(
            vectors=np.vstack(self._embeddings),
            segment_refs=tuple(self._embedding_refs),
            durations=np.asarray(self._embedding_durations),
        )


def run_cycle(state: SessionState, window: DialogueWindow) -> SessionState:
    """Process one window end to end; all-or-nothing on LLM failure.

    Both LLM calls complete before any mutation, so a failed window
    leaves memory and history untouched (it is logged and counted as
    skipped).  Embeddings accumulate regardless: diarization does not
    depend on the reasoning calls.
    """
    if window.index != state.windows_processed:
        raise ValueError(
            f"window {window.index} arrived out of order (expected {state.windows_processed})"
        )
    state.accumulate_embeddings(window)
    if not window.segments:
        state.windows_processed += 1
        return state
    try:
        analysis = analyze_window(state.client, window, state.history)
        batch = extract_evidence(state.client, analysis, window, state.config.schema)
    except _SKIPPABLE as exc:
        logger.warning("window %d skipped: %s", window.index, exc)
        state.skipped.append((window.index, f"{type(exc).__name__}: {exc}"))
        state.windows_processed += 1
        if (
            state.config.max_skipped_windows is not None
            and len(state.skipped) > state.config.max_skipped_windows
        ):
            raise LlmUnavailable(
                f"skip budget exhausted: {len(state.skipped)} windows failed"
            ) from exc
        return state
    _apply_batch(state, batch)
    state.history = append_history(state.history, analysis)
    state.windows_processed += 1
    return state


def _apply_batch(state: SessionState, batch: EvidenceBatch) -> None:
    state.dropped_items += len(batch.dropped)
    for evidence in batch.tuples:
        result = state.memory.store(evidence, state.config.jaccard_threshold)
        if result.accepted:
            state.accepted += 1
        else:
            state.rejected_duplicates += 1


def process_windows(
    config: SessionConfig,
    windows: Iterable[DialogueWindow],
    client: LlmClient,
    state: Optional[SessionState] = None,
    checkpoint_path: Optional[Path] = None,
) -> SessionState:
    """Drive run_cycle over pre-cut windows; the batch-mode entry point.

    Streaming a session and batch-processing the same pre-cut windows
    land on identical final state because this loop is the only state
    carrier.
    """
    state = state or SessionState.fresh(config, client)
    for window in windows:
        if window.index < state.windows_processed:
            state.accumulate_embeddings(window)  # resumed: cycle already ran
            continue
        run_cycle(state, window)
        if checkpoint_path is not None:
            save_checkpoint(state, checkpoint_path)
    return state


def save_checkpoint(state: SessionState, path: Path) -> None:
    doc = {
        "windows_processed": state.windows_processed,
        "memory": state.memory.to_dict(),
        "history": list(state.history.entries),
        "skipped": state.skipped,
        "counters": {
            "accepted": state.accepted,
            "rejected_duplicates": state.rejected_duplicates,
            "dropped_items": state.dropped_items,
        },
    }
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(doc, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)


def load_checkpoint(path: Path, config: SessionConfig, client: LlmClient) -> SessionState:
    try:
        doc = json.loads(path.read_text("utf-8"))
        memory = HierarchicalEvidenceMemory.from_dict(doc["memory"], config.schema)
        state = SessionState(
            config=config,
            client=client,
            memory=memory,
            history=HistoryBuffer(
                entries=tuple(doc["history"]), max_chars=config.history_max_chars
            ),
            windows_processed=int(doc["windows_processed"]),
            skipped=[tuple(s) for s in doc.get("skipped", [])],
        )
        counters = doc.get("counters", {})
        state.accepted = int(counters.get("accepted", 0))
        state.rejected_duplicates = int(counters.get("rejected_duplicates", 0))
        state.dropped_items = int(counters.get("dropped_items", 0))
        return state
    except CorruptDump:
        raise
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptDump(f"unusable checkpoint {path}: {exc}") from exc


@dataclass
class RunResult:
    profile: Profile
    memory: HierarchicalEvidenceMemory
    grounding: GroundingReport
    windows: list[DialogueWindow]
    corrected_segments: list[DialogueSegment]
    recluster: Optional[GlobalReclusterResult]
    report: dict
    out_dir: Optional[Path] = None


def _corrected_transcript(
    windows: list[DialogueWindow], recluster: Optional[GlobalReclusterResult]
) -> list[DialogueSegment]:
    corrections = {}
    if recluster is not None:
        corrections = {(w, s): role for w, s, role in recluster.segment_roles}
    segments = []
    for window in windows:
        for i, segment in enumerate(window.segments):
            role = corrections.get((window.index, i), segment.role)
            if role != segment.role:
                segment = DialogueSegment(
                    utterance=segment.utterance,
                    role=role,
                    t_start=segment.t_start,
                    t_end=segment.t_end,
                    embedding=segment.embedding,
                    emotion=segment.emotion,
                )
            segments.append(segment)
    return segments


def run_session(
    config: SessionConfig,
    source: SessionSource,
    out_dir: "str | Path | None" = None,
    session_id: str = "session",
    enrollment: Optional[list] = None,
    client: Optional[LlmClient] = None,
    resume: bool = False,
) -> RunResult:
    """Run one full session and persist every artifact.

    Finalization: global re-clustering over all accumulated embeddings
    (when an enrollment vector is available), synthesis strictly from
    memory, grounding validation, artifact writes.  ``resume`` picks up
    from ``<out_dir>/checkpoint.json``, replaying the source but only
    re-running cycles past the checkpoint.
    """
    out_path: Optional[Path] = None
    checkpoint_path: Optional[Path] = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        checkpoint_path = out_path / "checkpoint.json"
    if client is None:
        client = build_client(config, audit_path=out_path / "audit.jsonl" if out_path else None)

    state: Optional[SessionState] = None
    if resume and checkpoint_path is not None and checkpoint_path.exists():
        state = load_checkpoint(checkpoint_path, config, client)
        logger.info("resuming after %d processed windows", state.windows_processed)

    windows: list[DialogueWindow] = []

    def _collect() -> Iterator[DialogueWindow]:
        for window in window_stream(source, config.window_seconds):
            windows.append(window)
            yield window

    state = process_windows(config, _collect(), client, state=state, checkpoint_path=checkpoint_path)

    recluster: Optional[GlobalReclusterResult] = None
    embeddings = state.embedding_set()
    if embeddings is not None and enrollment is not None:
        try:
            recluster = global_recluster(
                embeddings,
                config.speaker_counts,
                config.seed,
                unit_normalize(enrollment),
                guardian_present=3 in config.speaker_counts,
            )
        except TooFewPoints as exc:
            logger.warning("global re-clustering skipped: %s", exc)

    generated_at = max((w.window_end for w in windows if w.segments), default=0.0)
    try:
        profile = synthesize_profile(client, state.memory, session_id, generated_at)
    except ParseError as exc:
        logger.error("profile synthesis failed (%s); emitting empty profile", exc)
        from .synthesis import empty_profile

        profile = empty_profile(state.memory, session_id, generated_at)
        state.skipped.append((-1, f"synthesis ParseError: {exc}"))
    grounding = validate_grounding(profile, state.memory, windows)
    corrected = _corrected_transcript(windows, recluster)

    report = {
        "session_id": session_id,
        "windows_total": len(windows),
        "windows_processed": state.windows_processed,
        "windows_skipped": [{"index": i, "reason": r} for i, r in state.skipped],
        "evidence_accepted": state.accepted,
        "evidence_rejected_duplicate": state.rejected_duplicates,
        "evidence_items_dropped": state.dropped_items,
        "diarization": None
        if recluster is None
        else {
            "k": recluster.cluster.k,
            "silhouette": recluster.cluster.silhouette,
            "roles": {str(l): r for l, r in sorted(recluster.roles.assignments.items())},
        },
        "grounding": {
            "total_claims": grounding.total_claims,
            "grounded_claims": grounding.grounded_claims,
            "violations": len(grounding.violations),
        },
    }

    result = RunResult(
        profile=profile,
        memory=state.memory,
        grounding=grounding,
        windows=windows,
        corrected_segments=corrected,
        recluster=recluster,
        report=report,
        out_dir=out_path,
    )
    if out_path is not None:
        _write_artifacts(result, session_id)
    return result


def _write_artifacts(result: RunResult, session_id: str) -> None:
    out = result.out_dir
    result.memory.persist(out / f"{session_id}.hem.json")
    (out / f"{session_id}.profile.json").write_text(
        render_profile(result.profile, result.memory, "machine"), encoding="utf-8"
    )
    (out / f"{session_id}.profile.txt").write_text(
        render_profile(result.profile, result.memory, "human"), encoding="utf-8"
    )
    (out / f"{session_id}.grounding.json").write_text(
        json.dumps(grounding_to_dict(result.grounding), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    with open(out / f"{session_id}.transcript.jsonl", "w", encoding="utf-8") as fh:
        for segment in result.corrected_segments:
            fh.write(json.dumps(segment_to_dict(segment), ensure_ascii=False) + "\n")
    (out / f"{session_id}.report.json").write_text(
        json.dumps(result.report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def build_client(config: SessionConfig, audit_path: Optional[Path] = None) -> LlmClient:
    if config.llm_backend == "mock":
        if not config.mock_dir:
            raise SourceError("mock backend requires mock_dir in the config")
        return LlmClient.mock(config.mock_dir, params=config.llm, audit_path=audit_path)
    return LlmClient.http(config.llm, audit_path=audit_path)
