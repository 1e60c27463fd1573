"""Per-window clinical reasoning and evidence extraction.

One LLM call per window runs the three-step reasoning pass (consultation
phase identification, speaker-intent filtering, risk and emotional state
inference) and yields a free-text analysis; a second call extracts
evidence tuples from that analysis plus the raw window.  Both calls
demand a fenced JSON block; a response violating the grammar earns one
corrective reprompt, then ParseError.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from typing import Optional

from .errors import EmptyWindow, ParseError, VerbatimViolation
from .llm import LlmClient, llm_complete
from .schema import DialogueWindow, EvidenceTuple, Schema, UnknownDimension

logger = logging.getLogger(__name__)

PHASE_SUPPORTIVE_GUIDANCE = "SupportiveGuidance"
PHASE_OBJECTIVE_EVALUATION = "ObjectiveEvaluation"
PHASE_PROBLEM_MANAGEMENT = "ProblemManagement"
PHASES = (PHASE_SUPPORTIVE_GUIDANCE, PHASE_OBJECTIVE_EVALUATION, PHASE_PROBLEM_MANAGEMENT)

VERDICT_RETAIN_PATIENT = "retain-patient"
VERDICT_RETAIN_PARAPHRASE = "retain-paraphrase"
VERDICT_DISCARD = "discard"
VERDICTS = (VERDICT_RETAIN_PATIENT, VERDICT_RETAIN_PARAPHRASE, VERDICT_DISCARD)

SEVERITY_CLINICAL = "clinical"
SEVERITY_NORMATIVE = "normative"

#: Closed emotion vocabularies; the severity level selects which one applies.
PATHOLOGICAL_EMOTIONS = frozenset(
    {"depression", "anxiety-disorder", "hopelessness", "anhedonia", "suicidal-ideation"}
)
EVERYDAY_EMOTIONS = frozenset({"sadness", "worry", "frustration", "fatigue", "calm", "mixed"})

_FENCE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

ANALYSIS_SYSTEM_PROMPT = """\
You are a clinical assistant reviewing one window of a counseling session transcript.
Work through three steps and write your reasoning as free text:

Step 1 - Session phase. Decide which of these activities appear in the window:
  SupportiveGuidance   (psycho-education, relaxation exercises, general mental-health facts)
  ObjectiveEvaluation  (structured symptom rating, confirming scores on standard scales)
  ProblemManagement    (open-ended exploration of family, peers, school or work stress,
                        self-worth, and self-harm risk). Treat this activity as the most
                        important one: when present, analyze its content in extra depth.

Step 2 - Speaker-intent filtering, line by line for counselor speech:
  keep a counselor line when it restates or confirms something the patient said or implied
  (verdict "retain-paraphrase"); drop counselor lines that only offer generic hypotheses,
  illustrative examples, or factual explanations (verdict "discard"). Patient and guardian
  lines that carry clinical content get verdict "retain-patient".

Step 3 - Risk and emotional state. Look for explicit or implicit self-harm or suicidal
  ideation. Judge whether the distress is clinically significant ("clinical") or an
  ordinary response to circumstances ("normative"), based on how long it has lasted, how
  much it impairs functioning, and whether high-risk signals are present. Then name the
  dominant emotion: from {pathological} when severity is clinical, or from {everyday}
  when severity is normative.

End your reply with exactly one fenced block of this shape:

```json
{{
  "phases": ["ProblemManagement"],
  "filtered_segments": [{{"segment": 0, "verdict": "retain-patient"}}],
  "severity": "clinical",
  "major_emotion": "depression"
}}
```

"segment" is the index shown in the transcript. List each index at most once.
"""

EXTRACTION_SYSTEM_PROMPT = """\
You extract clinical evidence from one counseling transcript window, guided by the
analysis you are given. Produce evidence items with three parts:
  dimension: one id from the catalog below;
  utterance: a source line copied character-for-character from the transcript
             (no paraphrase, no added or removed whitespace);
  insight:   one concise patient-centric statement derived from that utterance.

Rules: cover every dimension for which the window holds real evidence; give the
risk-flagged dimensions priority; never build an item from a negated or denied
statement (e.g. "no self-harm"); never invent content absent from the transcript.

Dimension catalog:
{catalog}

Reply with exactly one fenced block holding a JSON array:

```json
[{{"dimension": "C1", "utterance": "...", "insight": "...", "emotion": null}}]
```
"""

EXTRACTION_ESCALATION = """\
This window contains ProblemManagement activity: search it exhaustively, especially for
self-harm history, depression signals, distress, and bullying, and prefer recall over
brevity for those dimensions.
"""

_REPROMPT_INSTRUCTION = (
    "Your previous reply violated the required output format: {reason}. "
    "Reply again, keeping your analysis but ending with exactly one valid fenced "
    "```json``` block of the required shape."
)


@dataclass(frozen=True)
class WindowAnalysis:
    """Structured findings plus the free-text analysis for one window."""

    window_index: int
    phases: tuple[str, ...]
    filtered_segments: tuple[tuple[int, str], ...]
    severity: str
    major_emotion: str
    analysis_text: str

    def __post_init__(self):
        for phase in self.phases:
            if phase not in PHASES:
                raise ValueError(f"unknown phase: {phase!r}")
        for _, verdict in self.filtered_segments:
            if verdict not in VERDICTS:
                raise ValueError(f"unknown verdict: {verdict!r}")
        if self.severity not in (SEVERITY_CLINICAL, SEVERITY_NORMATIVE):
            raise ValueError(f"unknown severity: {self.severity!r}")
        vocabulary = PATHOLOGICAL_EMOTIONS if self.severity == SEVERITY_CLINICAL else EVERYDAY_EMOTIONS
        if self.major_emotion not in vocabulary:
            raise ValueError(
                f"emotion {self.major_emotion!r} not in the {self.severity} vocabulary"
            )
        if not self.analysis_text.strip():
            raise ValueError("analysis_text must be non-empty")


@dataclass(frozen=True)
class HistoryBuffer:
    """Rolling buffer of per-window analyses giving cross-window context."""

    entries: tuple[str, ...] = ()
    max_chars: int = 8000

    @property
    def total_chars(self) -> int:
        return sum(len(e) for e in self.entries)


def append_history(history: HistoryBuffer, analysis: WindowAnalysis) -> HistoryBuffer:
    """Append the analysis text, head-dropping oldest entries over budget."""
    entries = list(history.entries)
    entries.append(analysis.analysis_text)
    total = sum(len(e) for e in entries)
    while entries and total > history.max_chars:
        total -= len(entries.pop(0))
    return HistoryBuffer(entries=tuple(entries), max_chars=history.max_chars)


@dataclass(frozen=True)
class EvidenceBatch:
    window_index: int
    tuples: tuple[EvidenceTuple, ...]
    dropped: tuple[tuple[str, str], ...] = ()  # (reason, item repr)


class _GrammarViolation(Exception):
    pass


def _fenced_json(text: str):
    blocks = _FENCE.findall(text)
    if not blocks:
        raise _GrammarViolation("no fenced json block found")
    try:
        return json.loads(blocks[-1])
    except json.JSONDecodeError as exc:
        raise _GrammarViolation(f"fenced block is not valid JSON ({exc.msg})") from exc


def _render_transcript(window: DialogueWindow) -> str:
    lines = []
    for i, seg in enumerate(window.segments):
        emotion = f", emotion={seg.emotion}" if seg.emotion else ""
        lines.append(f"[{i}] ({seg.role}, {seg.t_start:.1f}-{seg.t_end:.1f}s{emotion}) {seg.utterance}")
    return "\n".join(lines)


def build_analysis_messages(window: DialogueWindow, history: HistoryBuffer) -> list[dict]:
    system = ANALYSIS_SYSTEM_PROMPT.format(
        pathological=", ".join(sorted(PATHOLOGICAL_EMOTIONS)),
        everyday=", ".join(sorted(EVERYDAY_EMOTIONS)),
    )
    parts = []
    if history.entries:
        parts.append("Analyses of earlier windows in this session:\n" + "\n---\n".join(history.entries))
    parts.append(f"Transcript window {window.index}:\n{_render_transcript(window)}")
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": "\n\n".join(parts)},
    ]


def _parse_analysis(window: DialogueWindow, text: str) -> WindowAnalysis:
    doc = _fenced_json(text)
    if not isinstance(doc, dict):
        raise _GrammarViolation("fenced block must be a JSON object")
    phases = doc.get("phases")
    if not isinstance(phases, list) or any(p not in PHASES for p in phases):
        raise _GrammarViolation("phases must be a list drawn from the three phase names")
    if len(set(phases)) != len(phases):
        raise _GrammarViolation("phases listed more than once")
    raw_filters = doc.get("filtered_segments", [])
    if not isinstance(raw_filters, list):
        raise _GrammarViolation("filtered_segments must be a list")
    filters = []
    seen = set()
    for item in raw_filters:
        if not isinstance(item, dict):
            raise _GrammarViolation("filtered_segments entries must be objects")
        idx = item.get("segment")
        verdict = item.get("verdict")
        if not isinstance(idx, int) or not (0 <= idx < len(window.segments)):
            raise _GrammarViolation(f"segment index out of range: {idx!r}")
        if verdict not in VERDICTS:
            raise _GrammarViolation(f"unknown verdict: {verdict!r}")
        if idx in seen:
            raise _GrammarViolation(f"segment {idx} filtered twice")
        seen.add(idx)
        filters.append((idx, verdict))
    try:
        return WindowAnalysis(
            window_index=window.index,
            phases=tuple(phases),
            filtered_segments=tuple(filters),
            severity=doc.get("severity", ""),
            major_emotion=doc.get("major_emotion", ""),
            analysis_text=text,
        )
    except ValueError as exc:
        raise _GrammarViolation(str(exc)) from exc


def _complete_with_reprompt(client, stage, window_index, messages, parse):
    text = llm_complete(client, stage, window_index, messages)
    try:
        return parse(text)
    except _GrammarViolation as first:
        logger.warning("window %d %s output rejected: %s; reprompting", window_index, stage, first)
        retry_messages = messages + [
            {"role": "assistant", "content": text},
            {"role": "user", "content": _REPROMPT_INSTRUCTION.format(reason=first)},
        ]
        retry_text = llm_complete(client, stage, window_index, retry_messages)
        try:
            return parse(retry_text)
        except _GrammarViolation as second:
            raise ParseError(f"{stage} output invalid after reprompt: {second}") from second


def analyze_window(client: LlmClient, window: DialogueWindow, history: HistoryBuffer) -> WindowAnalysis:
    """Run the three-step reasoning pass over one window.

    The history portion of the prompt is bounded by the buffer budget;
    raises EmptyWindow for a window with no segments.
    """
    if not window.segments:
        raise EmptyWindow(f"window {window.index} has no segments")
    messages = build_analysis_messages(window, history)
    return _complete_with_reprompt(
        client, "parse", window.index, messages, lambda text: _parse_analysis(window, text)
    )


def _dimension_catalog(schema: Schema) -> str:
    lines = []
    for module in schema.modules:
        for dim in schema.dimensions_of(module.id):
            flag = "  [risk priority]" if dim.risk_priority else ""
            lines.append(f"  {dim.id}: {dim.name} ({module.name}){flag}")
    return "\n".join(lines)


def build_extraction_messages(
    analysis: WindowAnalysis, window: DialogueWindow, schema: Schema
) -> list[dict]:
    system = EXTRACTION_SYSTEM_PROMPT.format(catalog=_dimension_catalog(schema))
    if PHASE_PROBLEM_MANAGEMENT in analysis.phases:
        system += "\n" + EXTRACTION_ESCALATION
    user = (
        f"Analysis of window {window.index}:\n{analysis.analysis_text}\n\n"
        f"Transcript window {window.index}:\n{_render_transcript(window)}"
    )
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def _parse_extraction_items(text: str) -> list:
    doc = _fenced_json(text)
    if not isinstance(doc, list):
        raise _GrammarViolation("fenced block must be a JSON array")
    return doc


def extract_evidence(
    client: LlmClient, analysis: WindowAnalysis, window: DialogueWindow, schema: Schema
) -> EvidenceBatch:
    """Second LLM call: structured evidence tuples for one window.

    Items failing validation (unknown dimension, non-verbatim utterance,
    empty insight, malformed shape) are dropped with a logged reason and
    never repaired.
    """
    if analysis.window_index != window.index:
        raise ValueError("analysis does not belong to this window")
    messages = build_extraction_messages(analysis, window, schema)
    items = _complete_with_reprompt(
        client, "extract", window.index, messages, _parse_extraction_items
    )
    tuples = []
    dropped = []
    for item in items:
        brief = json.dumps(item, ensure_ascii=False)[:200]
        if not isinstance(item, dict) or not all(
            isinstance(item.get(k), str) for k in ("dimension", "utterance", "insight")
        ):
            dropped.append(("malformed-item", brief))
            continue
        emotion = item.get("emotion")
        if emotion is not None and not isinstance(emotion, str):
            dropped.append(("malformed-item", brief))
            continue
        try:
            tuples.append(
                EvidenceTuple.create(
                    schema,
                    window,
                    dimension_id=item["dimension"],
                    utterance=item["utterance"],
                    insight=item["insight"],
                    emotion=emotion,
                )
            )
        except UnknownDimension:
            dropped.append(("unknown-dimension", brief))
        except VerbatimViolation:
            dropped.append(("not-verbatim", brief))
        except ValueError:
            dropped.append(("empty-insight", brief))
    for reason, item in dropped:
        logger.warning("window %d evidence item dropped (%s): %s", window.index, reason, item)
    return EvidenceBatch(window_index=window.index, tuples=tuple(tuples), dropped=tuple(dropped))
