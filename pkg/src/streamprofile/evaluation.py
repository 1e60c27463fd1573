"""Profile quality metrics: ROUGE-L, embedding similarity, LLM judge.

ROUGE-L is computed from scratch over a mixed tokenization (whitespace
words, except CJK runs which split into single characters).  Embedding
similarity goes through a pluggable embedder: a deterministic hash-based
toy for tests, or any HTTP service speaking
``POST {"texts": [...]} -> {"vectors": [[...]]}``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import requests

from . import kernels
from .cot import _complete_with_reprompt, _GrammarViolation, _FENCE
from .diarize import cosine_similarity
from .errors import EmbedderUnavailable, EmptyInput
from .llm import LlmClient
from .schema import nfc

logger = logging.getLogger(__name__)

_CJK = "一-鿿㐀-䶿豈-﫿"
_TOKEN = re.compile(f"[{_CJK}]|[^\\s{_CJK}]+")


def tokenize(text: str) -> list[str]:
    """Whitespace tokens, with contiguous CJK runs split per character."""
    return _TOKEN.findall(nfc(text))


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Longest common subsequence length over arbitrary token sequences.

    Tokens are interned to integer codes and handed to the active kernel
    backend; O(len(a) * len(b)) time, linear memory.
    """
    if not a or not b:
        return 0
    codes: dict = {}
    enc_a = np.fromiter((codes.setdefault(t, len(codes)) for t in a), dtype=np.int64, count=len(a))
    enc_b = np.fromiter((codes.setdefault(t, len(codes)) for t in b), dtype=np.int64, count=len(b))
    return int(kernels.lcs_length(enc_a, enc_b))


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """LCS-based overlap between a candidate and a reference text.

    Both empty scores 1.0 everywhere; exactly one empty scores 0.0.
    """
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand and not ref:
        return RougeScore(1.0, 1.0, 1.0)
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return RougeScore(precision, recall, f1)


class ToyEmbedder:
    """Deterministic feature-hash embedder for tests.

    Hashes character bigrams and trigrams of the NFC text into a
    fixed-dimension unit vector; a pure function of the text.
    """

    kind = "deterministic-toy"

    def __init__(self, dimension: int = 64):
        self.dimension = dimension

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension))
        for row, text in enumerate(texts):
            normalized = nfc(text)
            grams = [normalized[i : i + n] for n in (2, 3) for i in range(len(normalized) - n + 1)]
            if not grams:
                grams = [normalized or "\x00"]
            for gram in grams:
                digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
                value = int.from_bytes(digest, "big")
                sign = 1.0 if value & 1 else -1.0
                out[row, (value >> 1) % self.dimension] += sign
            norm = np.linalg.norm(out[row])
            if norm < 1e-12:
                out[row, 0] = 1.0
            else:
                out[row] /= norm
        return out


class HttpEmbedder:
    """Client for an embedding service returning JSON float arrays."""

    kind = "http-service"

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint
        self.timeout = timeout
        self.dimension: Optional[int] = None

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        try:
            response = requests.post(
                self.endpoint, json={"texts": list(texts)}, timeout=self.timeout
            )
            response.raise_for_status()
            vectors = np.asarray(response.json()["vectors"], dtype=np.float64)
        except (requests.RequestException, ValueError, KeyError, TypeError) as exc:
            raise EmbedderUnavailable(f"embedding service failed: {exc}") from exc
        if vectors.ndim != 2 or vectors.shape[0] != len(texts):
            raise EmbedderUnavailable("embedding service returned a malformed matrix")
        self.dimension = int(vectors.shape[1])
        return vectors


def embed_similarity(candidate: str, reference: str, embedder) -> float:
    """Cosine similarity of the two texts' embeddings."""
    vectors = embedder.embed([candidate, reference])
    return cosine_similarity(vectors[0], vectors[1])


@dataclass(frozen=True)
class JudgeScores:
    hallucination: int
    coverage: int
    consistency: int

    def __post_init__(self):
        for name in ("hallucination", "coverage", "consistency"):
            value = getattr(self, name)
            if not isinstance(value, int) or not (1 <= value <= 5):
                raise ValueError(f"{name} must be an integer in 1..5, got {value!r}")

    @property
    def average(self) -> float:
        return (self.hallucination + self.coverage + self.consistency) / 3


JUDGE_SYSTEM_PROMPT = """\
You grade a generated psychological profile against a reference profile and the session
transcript. Score three dimensions, each an integer from 1 (worst) to 5 (best):

  hallucination: how free the generated profile is of fabricated or unverifiable
                 content, including plausible-sounding claims with no support in the
                 transcript (5 = nothing fabricated);
  coverage:      how many of the reference profile's key facts the generated profile
                 captures (5 = all of them);
  consistency:   whether every claim in the generated profile is supported by the
                 transcript (5 = every claim grounded).

Reply with exactly one fenced block:

```json
{"hallucination": 3, "coverage": 2, "consistency": 4}
```
"""


def _parse_judge(text: str) -> JudgeScores:
    blocks = _FENCE.findall(text)
    if not blocks:
        raise _GrammarViolation("no fenced json block found")
    try:
        doc = json.loads(blocks[-1])
    except json.JSONDecodeError as exc:
        raise _GrammarViolation(f"fenced block is not valid JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise _GrammarViolation("fenced block must be a JSON object")
    try:
        return JudgeScores(
            hallucination=doc["hallucination"],
            coverage=doc["coverage"],
            consistency=doc["consistency"],
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise _GrammarViolation(f"bad judge scores: {exc}") from exc


def judge_profile(
    client: LlmClient, profile_document: str, transcript: str, reference_profile: str
) -> JudgeScores:
    """LLM-as-judge rubric scoring; out-of-range values earn one reprompt."""
    for name, doc in (
        ("profile", profile_document),
        ("transcript", transcript),
        ("reference", reference_profile),
    ):
        if not doc.strip():
            raise ValueError(f"{name} document is empty")
    user = (
        f"Generated profile:\n{profile_document}\n\n"
        f"Reference profile:\n{reference_profile}\n\n"
        f"Session transcript:\n{transcript}"
    )
    messages = [
        {"role": "system", "content": JUDGE_SYSTEM_PROMPT},
        {"role": "user", "content": user},
    ]
    return _complete_with_reprompt(client, "judge", 0, messages, _parse_judge)


@dataclass(frozen=True)
class MetricRow:
    """One evaluated session under one system."""

    system: str
    session_id: str
    embed_similarity: float
    rouge_l_f: float
    alt_similarity: Optional[float] = None
    judge: Optional[JudgeScores] = None


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate_report(
    rows: Sequence[MetricRow],
    embed_label: str = "EmbedSim",
    alt_label: str = "AltSim",
) -> dict:
    """Per-system metric means; Average is the arithmetic mean of the
    similarity columns (and, separately, of the three judge dimensions)."""
    if not rows:
        raise EmptyInput("no metric rows to aggregate")
    systems: dict[str, list[MetricRow]] = {}
    for row in rows:
        systems.setdefault(row.system, []).append(row)
    report: dict = {"labels": {"embed": embed_label, "alt": alt_label}, "systems": {}}
    for system, group in systems.items():
        embed_mean = _mean([r.embed_similarity for r in group])
        rouge_mean = _mean([r.rouge_l_f for r in group])
        alt_values = [r.alt_similarity for r in group if r.alt_similarity is not None]
        alt_mean = _mean(alt_values) if alt_values else None
        columns = [embed_mean, rouge_mean] + ([alt_mean] if alt_mean is not None else [])
        entry = {
            "sessions": len(group),
            "embed_similarity": embed_mean,
            "rouge_l_f": rouge_mean,
            "alt_similarity": alt_mean,
            "average": _mean(columns),
        }
        judged = [r.judge for r in group if r.judge is not None]
        if judged:
            means = {
                "hallucination": _mean([j.hallucination for j in judged]),
                "coverage": _mean([j.coverage for j in judged]),
                "consistency": _mean([j.consistency for j in judged]),
            }
            means["average"] = _mean(list(means.values()))
            entry["judge"] = means
        else:
            entry["judge"] = None
        report["systems"][system] = entry
    return report


def report_to_table(report: dict) -> str:
    """Aligned text table of the aggregate, one row per system."""
    embed_label = report["labels"]["embed"]
    alt_label = report["labels"]["alt"]
    headers = ["Model", embed_label, "ROUGE-L", alt_label, "Average"]
    rows = []
    for system, entry in report["systems"].items():
        rows.append(
            [
                system,
                f"{entry['embed_similarity']:.3f}",
                f"{entry['rouge_l_f']:.3f}",
                "-" if entry["alt_similarity"] is None else f"{entry['alt_similarity']:.3f}",
                f"{entry['average']:.3f}",
            ]
        )
    judged = {s: e["judge"] for s, e in report["systems"].items() if e["judge"]}
    lines = [_format_table(headers, rows)]
    if judged:
        jheaders = ["Model", "Hallucination", "Coverage", "Consistency", "Average"]
        jrows = [
            [
                system,
                f"{j['hallucination']:.2f}",
                f"{j['coverage']:.2f}",
                f"{j['consistency']:.2f}",
                f"{j['average']:.2f}",
            ]
            for system, j in judged.items()
        ]
        lines.append(_format_table(jheaders, jrows))
    return "\n\n".join(lines)


def _format_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def fmt(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([fmt(headers), sep] + [fmt(r) for r in rows])
