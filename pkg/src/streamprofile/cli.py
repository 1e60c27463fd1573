"""Command-line entry point.

Subcommands: ``run`` (stream a session), ``replay`` (run with wall-clock
pacing), ``diarize`` (role correction only), ``eval`` (profile metrics).
Exit codes: 0 success, 2 config error, 3 source error, 4 LLM hard
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    EmbedderUnavailable,
    LlmUnavailable,
    ParseError,
    SchemaError,
    SourceError,
    StreamProfileError,
    TooFewPoints,
    UnorderedSource,
)
from .schema import load_config, segment_from_dict, segment_to_dict, unit_normalize

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOURCE = 3
EXIT_LLM = 4

logger = logging.getLogger(__name__)


def _read_enrollment(path: str):
    try:
        vector = json.loads(Path(path).read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SourceError(f"cannot read enrollment vector {path}: {exc}") from exc
    if not isinstance(vector, list):
        raise SourceError("enrollment file must hold one JSON array of numbers")
    return vector


def _read_segments(path: str):
    from .runner import SessionSource

    return list(SessionSource.from_jsonl(path))


def _cmd_run(args: argparse.Namespace) -> int:
    from .runner import SessionSource, run_session

    config = load_config(args.config)
    if args.input == "-":
        source = SessionSource.from_lines(sys.stdin)
    else:
        source = SessionSource.from_jsonl(args.input, replay_speed=args.speed)
    enrollment = _read_enrollment(args.enrollment) if args.enrollment else None
    result = run_session(
        config,
        source,
        out_dir=args.out,
        session_id=args.session_id,
        enrollment=enrollment,
        resume=args.resume,
    )
    print(json.dumps(result.report, ensure_ascii=False, indent=2))
    return EXIT_OK


def _cmd_diarize(args: argparse.Namespace) -> int:
    import numpy as np

    from .diarize import EmbeddingSet, assign_roles, cluster_candidates
    from .runner import window_stream
    from .schema import DialogueSegment

    segments = _read_segments(args.input)
    enrollment = unit_normalize(_read_enrollment(args.enrollment))
    windows = list(window_stream(iter(segments), args.window_seconds))
    vectors, refs, durations = [], [], []
    for window in windows:
        for i, segment in enumerate(window.segments):
            if segment.embedding is not None:
                vectors.append(segment.embedding)
                refs.append((window.index, i))
                durations.append(segment.duration)
    if not vectors:
        raise SourceError("no segment carries an embedding; nothing to diarize")
    emb = EmbeddingSet(
        vectors=np.vstack(vectors), segment_refs=tuple(refs), durations=np.asarray(durations)
    )
    counts = tuple(int(c) for c in args.counts.split(","))
    candidates = cluster_candidates(emb, counts, args.seed)
    best = max(candidates.values(), key=lambda r: (r.silhouette, -r.k))
    roles = assign_roles(
        best, enrollment, guardian_present=3 in counts, durations=emb.durations
    )
    corrections = {
        ref: roles.assignments[int(label)] for ref, label in zip(emb.segment_refs, best.labels)
    }

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "segments.diarized.jsonl", "w", encoding="utf-8") as fh:
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
                fh.write(json.dumps(segment_to_dict(segment), ensure_ascii=False) + "\n")
    from .diarize import cosine_similarity

    report = {
        "k": best.k,
        "silhouette_by_count": {str(k): r.silhouette for k, r in candidates.items()},
        "centroid_enrollment_similarity": [
            cosine_similarity(c, enrollment) for c in best.centroids
        ],
        "roles": {str(l): r for l, r in sorted(roles.assignments.items())},
    }
    (out_dir / "cluster_report.json").write_text(
        json.dumps(report, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    print(json.dumps(report, ensure_ascii=False, indent=2))
    return EXIT_OK


def _build_embedder(doc: dict):
    from .evaluation import HttpEmbedder, ToyEmbedder

    kind = doc.get("kind", "toy")
    if kind == "toy":
        return ToyEmbedder(dimension=int(doc.get("dimension", 64)))
    if kind == "http":
        return HttpEmbedder(endpoint=doc["endpoint"])
    raise ConfigError(f"unknown embedder kind: {kind!r}")


def _cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import (
        MetricRow,
        aggregate_report,
        embed_similarity,
        judge_profile,
        report_to_table,
        rouge_l,
    )
    from .runner import build_client

    raw = json.loads(Path(args.config).read_text("utf-8"))
    config = load_config(args.config)
    try:
        generated = Path(args.generated).read_text("utf-8")
        reference = Path(args.reference).read_text("utf-8")
    except OSError as exc:
        raise SourceError(f"cannot read profile document: {exc}") from exc
    transcript_segments = _read_segments(args.transcript)
    transcript_text = "\n".join(s.utterance for s in transcript_segments)

    embedder = _build_embedder(raw.get("embedder", {}))
    similarity = embed_similarity(generated, reference, embedder)
    rouge = rouge_l(generated, reference)
    alt = None
    if raw.get("alt_scorer"):
        alt = embed_similarity(generated, reference, _build_embedder(raw["alt_scorer"]))
    judge = None
    if args.judge:
        client = build_client(config)
        judge = judge_profile(client, generated, transcript_text, reference)
    row = MetricRow(
        system=args.system,
        session_id=args.session_id,
        embed_similarity=similarity,
        rouge_l_f=rouge.f1,
        alt_similarity=alt,
        judge=judge,
    )
    report = aggregate_report(
        [row],
        embed_label=raw.get("embedder", {}).get("label", "EmbedSim"),
        alt_label=raw.get("alt_scorer", {}).get("label", "AltSim") if raw.get("alt_scorer") else "AltSim",
    )
    metrics = {
        "system": row.system,
        "session_id": row.session_id,
        "embed_similarity": similarity,
        "rouge_l": {"precision": rouge.precision, "recall": rouge.recall, "f1": rouge.f1},
        "alt_similarity": alt,
        "judge": None
        if judge is None
        else {
            "hallucination": judge.hallucination,
            "coverage": judge.coverage,
            "consistency": judge.consistency,
            "average": judge.average,
        },
        "aggregate": report,
    }
    table = report_to_table(report)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(
            json.dumps(metrics, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
        )
        (out_dir / "metrics.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamprofile",
        description="Streaming evidence-grounded profile generation for counseling sessions",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="process a session stream end to end")
    run.add_argument("--config", required=True, help="session config JSON")
    run.add_argument("--input", required=True, help="segment JSONL path, or - for stdin")
    run.add_argument("--out", required=True, help="session output directory")
    run.add_argument("--session-id", default="session")
    run.add_argument("--enrollment", help="counselor enrollment embedding (one-line JSON array)")
    run.add_argument("--resume", action="store_true", help="continue from the last checkpoint")
    run.add_argument("--speed", type=float, default=0.0, help=argparse.SUPPRESS)
    run.set_defaults(func=_cmd_run)

    replay = sub.add_parser("replay", help="run with wall-clock pacing")
    replay.add_argument("--config", required=True)
    replay.add_argument("--input", required=True)
    replay.add_argument("--out", required=True)
    replay.add_argument("--session-id", default="session")
    replay.add_argument("--enrollment")
    replay.add_argument("--resume", action="store_true")
    replay.add_argument("--speed", type=float, default=1.0, help="replay speed multiplier (0 = flat out)")
    replay.set_defaults(func=_cmd_run)

    diarize = sub.add_parser("diarize", help="cluster embeddings and correct roles")
    diarize.add_argument("--input", required=True, help="segment JSONL with embeddings")
    diarize.add_argument("--enrollment", required=True)
    diarize.add_argument("--out", required=True)
    diarize.add_argument("--counts", default="2,3", help="allowed speaker counts, comma separated")
    diarize.add_argument("--seed", type=int, default=42)
    diarize.add_argument("--window-seconds", type=float, default=300.0)
    diarize.set_defaults(func=_cmd_diarize)

    ev = sub.add_parser("eval", help="score a generated profile against a reference")
    ev.add_argument("--config", required=True)
    ev.add_argument("--generated", required=True, help="generated profile document")
    ev.add_argument("--reference", required=True, help="reference profile document")
    ev.add_argument("--transcript", required=True, help="session transcript JSONL")
    ev.add_argument("--out", help="directory for metrics.json / metrics.txt")
    ev.add_argument("--system", default="streamprofile")
    ev.add_argument("--session-id", default="session")
    ev.add_argument("--judge", action="store_true", help="also run the LLM judge")
    ev.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, SchemaError) as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except (SourceError, UnorderedSource, TooFewPoints, EmbedderUnavailable) as exc:
        logger.error("source error: %s", exc)
        return EXIT_SOURCE
    except (LlmUnavailable, ParseError) as exc:
        logger.error("LLM failure: %s", exc)
        return EXIT_LLM
    except StreamProfileError as exc:
        logger.error("%s", exc)
        return EXIT_SOURCE


if __name__ == "__main__":
    sys.exit(main())
