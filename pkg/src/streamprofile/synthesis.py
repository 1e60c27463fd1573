"""Profile synthesis from memory contents, and grounding verification.

The synthesis prompt sees only stored evidence (insights plus entry
ids), never the raw transcript, and every emitted claim must cite entry
ids from its own module; claims that fail those checks are dropped.
``validate_grounding`` then re-checks the finished profile against the
memory and the full transcript with no LLM involved.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .cot import _complete_with_reprompt, _GrammarViolation
from .errors import ParseError
from .hem import HierarchicalEvidenceMemory
from .llm import LlmClient
from .schema import DialogueWindow, nfc, window_texts

logger = logging.getLogger(__name__)

VIOLATION_MISSING_ENTRY = "missing-entry"
VIOLATION_DIMENSION_MISMATCH = "dimension-mismatch"
VIOLATION_NOT_VERBATIM = "utterance-not-verbatim"

_CLAIM_LINE = re.compile(r"^([A-Z][0-9]+):\s*(.+?)\s*\[([^\[\]]+)\]\s*$")
_CLAIM_CANDIDATE = re.compile(r"^[A-Z][0-9]+\s*:")
_EVIDENCE_ID = re.compile(r"^ev-[0-9]+$")

SYNTHESIS_SYSTEM_PROMPT = """\
You write the final psychological profile for one counseling session, using ONLY the
evidence entries listed below. Never add information that is not in an entry.

Write one claim per line, in this exact shape:

<dimension-id>: <one profile sentence> [<entry-id>, <entry-id>, ...]

for example:

C1: Ongoing conflict with the father dominates family life. [ev-2, ev-5]

Every claim must cite at least one entry id, and may only cite entries whose dimension
belongs to the same lettered module as the claim's dimension. Skip modules that have no
evidence. Do not write anything else on claim lines.
"""


@dataclass(frozen=True)
class Claim:
    text: str
    dimension_id: str
    evidence_ids: tuple[str, ...]

    def __post_init__(self):
        if not self.evidence_ids:
            raise ValueError("a claim must cite at least one evidence entry")


@dataclass(frozen=True)
class ProfileSection:
    module_id: str
    module_name: str
    claims: tuple[Claim, ...]


@dataclass(frozen=True)
class Profile:
    """Final document: one section per schema module, claims citing evidence.

    ``generated_at`` is in-session stream time (seconds from session
    start), not wall-clock time, so identical inputs yield identical
    documents.
    """

    session_id: str
    generated_at: float
    sections: tuple[ProfileSection, ...]

    @property
    def claims(self) -> tuple[Claim, ...]:
        return tuple(c for s in self.sections for c in s.claims)


@dataclass(frozen=True)
class GroundingViolation:
    section_id: str
    claim_index: int
    claim_text: str
    reason: str
    detail: str


@dataclass(frozen=True)
class GroundingReport:
    total_claims: int
    grounded_claims: int
    violations: tuple[GroundingViolation, ...]

    def __post_init__(self):
        if self.grounded_claims > self.total_claims:
            raise ValueError("grounded_claims cannot exceed total_claims")
        if (self.grounded_claims == self.total_claims) != (len(self.violations) == 0):
            raise ValueError("violations must be empty exactly when all claims are grounded")


def _evidence_listing(mem: HierarchicalEvidenceMemory) -> str:
    lines = []
    for module in mem.schema.modules:
        header_written = False
        for dim in mem.schema.dimensions_of(module.id):
            for entry in mem.by_dimension.get(dim.id, ()):
                if not header_written:
                    lines.append(f"Module {module.id} ({module.name}):")
                    header_written = True
                lines.append(f"  [{entry.id}] {dim.id} ({dim.name}): {entry.tuple.insight}")
    return "\n".join(lines)


def _parse_claims(mem: HierarchicalEvidenceMemory, text: str) -> list[Claim]:
    claims = []
    candidates = 0
    for raw_line in text.splitlines():
        line = raw_line.strip()
        if not line or not _CLAIM_CANDIDATE.match(line):
            continue
        candidates += 1
        match = _CLAIM_LINE.match(line)
        if not match:
            logger.warning("claim line with unparseable citation dropped: %s", line[:120])
            continue
        dim_id, claim_text, ids_raw = match.groups()
        ids = tuple(part.strip() for part in ids_raw.split(","))
        if not all(_EVIDENCE_ID.match(i) for i in ids):
            logger.warning("claim with malformed evidence ids dropped: %s", line[:120])
            continue
        if dim_id not in mem.schema:
            logger.warning("claim for unknown dimension %s dropped", dim_id)
            continue
        entries = [mem.get(i) for i in ids]
        if any(e is None for e in entries):
            missing = [i for i, e in zip(ids, entries) if e is None]
            logger.warning("claim citing unknown entries %s dropped", missing)
            continue
        module_id = dim_id[0]
        if any(e.tuple.dimension_id[0] != module_id for e in entries):
            logger.warning("claim citing entries outside module %s dropped", module_id)
            continue
        claims.append(Claim(text=claim_text, dimension_id=dim_id, evidence_ids=ids))
    if candidates and not claims:
        # Every candidate line failed; treat as a grammar-level failure so
        # the caller reprompts once instead of silently emitting nothing.
        raise _GrammarViolation("no claim line parsed cleanly")
    if not candidates:
        raise _GrammarViolation("no claim lines found")
    return claims


def empty_profile(mem: HierarchicalEvidenceMemory, session_id: str, generated_at: float) -> Profile:
    sections = tuple(
        ProfileSection(module_id=m.id, module_name=m.name, claims=())
        for m in mem.schema.modules
    )
    return Profile(session_id=session_id, generated_at=generated_at, sections=sections)


def synthesize_profile(
    client: LlmClient,
    mem: HierarchicalEvidenceMemory,
    session_id: str = "session",
    generated_at: float = 0.0,
) -> Profile:
    """One LLM call over the memory contents; claims are citation-checked.

    An empty memory short-circuits to an explicitly empty profile with no
    LLM call; no claim is ever kept for a module without stored evidence.
    """
    if len(mem) == 0:
        return empty_profile(mem, session_id, generated_at)
    messages = [
        {"role": "system", "content": SYNTHESIS_SYSTEM_PROMPT},
        {"role": "user", "content": "Evidence entries:\n" + _evidence_listing(mem)},
    ]
    claims = _complete_with_reprompt(
        client, "profile", 0, messages, lambda text: _parse_claims(mem, text)
    )
    by_module: dict[str, list[Claim]] = {}
    for claim in claims:
        by_module.setdefault(claim.dimension_id[0], []).append(claim)
    sections = tuple(
        ProfileSection(module_id=m.id, module_name=m.name, claims=tuple(by_module.get(m.id, ())))
        for m in mem.schema.modules
    )
    return Profile(session_id=session_id, generated_at=generated_at, sections=sections)


def validate_grounding(
    profile: Profile,
    mem: HierarchicalEvidenceMemory,
    transcript: Iterable[DialogueWindow],
) -> GroundingReport:
    """LLM-free check that every claim resolves to real, in-module, verbatim evidence."""
    transcript_text = window_texts(transcript)
    violations = []
    total = 0
    grounded = 0
    for section in profile.sections:
        for index, claim in enumerate(section.claims):
            total += 1
            claim_ok = True
            for entry_id in claim.evidence_ids:
                entry = mem.get(entry_id)
                if entry is None:
                    claim_ok = False
                    violations.append(
                        GroundingViolation(
                            section.module_id, index, claim.text,
                            VIOLATION_MISSING_ENTRY, f"entry {entry_id} not in memory",
                        )
                    )
                    continue
                if entry.tuple.dimension_id[0] != section.module_id:
                    claim_ok = False
                    violations.append(
                        GroundingViolation(
                            section.module_id, index, claim.text,
                            VIOLATION_DIMENSION_MISMATCH,
                            f"entry {entry_id} belongs to {entry.tuple.dimension_id}",
                        )
                    )
                if nfc(entry.tuple.utterance) not in transcript_text:
                    claim_ok = False
                    violations.append(
                        GroundingViolation(
                            section.module_id, index, claim.text,
                            VIOLATION_NOT_VERBATIM,
                            f"entry {entry_id} utterance not found in transcript",
                        )
                    )
            grounded += claim_ok
    return GroundingReport(total_claims=total, grounded_claims=grounded, violations=tuple(violations))


def grounding_to_dict(report: GroundingReport) -> dict:
    return {
        "total_claims": report.total_claims,
        "grounded_claims": report.grounded_claims,
        "violations": [
            {
                "section": v.section_id,
                "claim_index": v.claim_index,
                "claim_text": v.claim_text,
                "reason": v.reason,
                "detail": v.detail,
            }
            for v in report.violations
        ],
    }


def profile_to_dict(profile: Profile) -> dict:
    return {
        "session_id": profile.session_id,
        "generated_at": profile.generated_at,
        "sections": [
            {
                "module_id": s.module_id,
                "module_name": s.module_name,
                "claims": [
                    {
                        "text": c.text,
                        "dimension_id": c.dimension_id,
                        "evidence_ids": list(c.evidence_ids),
                    }
                    for c in s.claims
                ],
            }
            for s in profile.sections
        ],
    }


def profile_from_dict(doc: dict) -> Profile:
    sections = tuple(
        ProfileSection(
            module_id=s["module_id"],
            module_name=s["module_name"],
            claims=tuple(
                Claim(
                    text=c["text"],
                    dimension_id=c["dimension_id"],
                    evidence_ids=tuple(c["evidence_ids"]),
                )
                for c in s["claims"]
            ),
        )
        for s in doc["sections"]
    )
    return Profile(
        session_id=doc["session_id"], generated_at=float(doc["generated_at"]), sections=sections
    )


def render_profile(
    profile: Profile, mem: HierarchicalEvidenceMemory, format: str = "machine"
) -> str:
    """Render to canonical JSON ("machine") or a reviewer document ("human")."""
    if format == "machine":
        return json.dumps(profile_to_dict(profile), ensure_ascii=False, indent=2) + "\n"
    if format != "human":
        raise ValueError(f"unknown format: {format!r}")
    lines = [f"Psychological profile: {profile.session_id}", ""]
    for section in profile.sections:
        lines.append(f"Module {section.module_id}: {section.module_name}")
        if not section.claims:
            lines.append("  (no evidence recorded)")
        for claim in section.claims:
            lines.append(f"  [{claim.dimension_id}] {claim.text}")
            for entry_id in claim.evidence_ids:
                entry = mem.get(entry_id)
                if entry is None:
                    lines.append(f'      {entry_id}: (missing from memory)')
                    continue
                t = entry.tuple
                lines.append(f'      {entry_id}: "{t.utterance}" [{t.t_start:.1f}s-{t.t_end:.1f}s]')
        lines.append("")
    return "\n".join(lines)
