"""Windowing, session cycles, checkpoint/resume, full runs on fixtures."""

import json
import time

import pytest

from streamprofile.cot import HistoryBuffer
from streamprofile.errors import LlmUnavailable, SourceError, UnorderedSource
from streamprofile.hem import HierarchicalEvidenceMemory
from streamprofile.llm import LlmClient
from streamprofile.runner import (
    SessionSource,
    SessionState,
    load_checkpoint,
    process_windows,
    run_cycle,
    run_session,
    save_checkpoint,
    window_stream,
)
from streamprofile.schema import DialogueSegment, load_config

from helpers import analysis_response, extraction_response, make_window


def _segment(t0, t1, text="说点什么", role="patient"):
    return DialogueSegment(utterance=text, role=role, t_start=t0, t_end=t1)


def _session_paths(fixtures_dir, name):
    d = fixtures_dir / name
    return load_config(d / "config.json"), d / "segments.jsonl", d


class TestWindowStream:
    def test_ninety_minutes_at_300s_gives_18_windows(self):
        segments = [_segment(i * 60.0, i * 60.0 + 5) for i in range(90)]  # one per minute
        windows = list(window_stream(iter(segments), 300.0))
        assert len(windows) == 18
        assert windows[0].window_start == 0.0
        assert windows[-1].index == 17

    def test_straddling_segment_stays_in_tstart_window(self):
        segments = [_segment(1.0, 2.0), _segment(299.9, 301.0)]
        windows = list(window_stream(iter(segments), 300.0))
        assert len(windows) == 1
        assert windows[0].index == 0
        assert windows[0].segments[-1].t_end == 301.0
        assert windows[0].window_end == 301.0

    def test_boundary_start_goes_to_next_window(self):
        segments = [_segment(1.0, 2.0), _segment(300.0, 305.0)]
        windows = list(window_stream(iter(segments), 300.0))
        assert [w.index for w in windows] == [0, 1]
        assert len(windows[1].segments) == 1

    def test_gap_emits_empty_windows(self):
        segments = [_segment(1.0, 2.0), _segment(700.0, 710.0)]
        windows = list(window_stream(iter(segments), 300.0))
        assert [w.index for w in windows] == [0, 1, 2]
        assert windows[1].segments == ()

    def test_decreasing_timestamps_rejected(self):
        source = SessionSource(kind="replay-file", segments=[_segment(10, 11), _segment(5, 6)])
        with pytest.raises(UnorderedSource):
            list(window_stream(source, 300.0))

    def test_empty_source_yields_nothing(self):
        assert list(window_stream(iter([]), 300.0)) == []


class TestSource:
    def test_reads_jsonl(self, fixtures_dir):
        _, segments_path, _ = _session_paths(fixtures_dir, "s01_teen")
        segments = list(SessionSource.from_jsonl(segments_path))
        assert len(segments) == 14
        assert segments[0].role == "counselor"

    def test_bad_line_raises_source_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"utterance": "x", "t_start": 0}\n', encoding="utf-8")
        with pytest.raises(SourceError):
            list(SessionSource.from_jsonl(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(SourceError):
            list(SessionSource.from_jsonl(tmp_path / "nope.jsonl"))

    def test_replay_pacing_changes_timing_not_content(self):
        lines = [_segment(0.0, 0.5), _segment(0.2, 0.7), _segment(0.4, 0.9)]
        fast = list(SessionSource(kind="replay-file", segments=lines, replay_speed=0.0))
        t0 = time.monotonic()
        paced = list(SessionSource(kind="replay-file", segments=lines, replay_speed=1.0))
        elapsed = time.monotonic() - t0
        assert paced == fast
        assert elapsed >= 0.35  # ~0.4 s of stream time at 1x


def _mock_client(n_windows=1):
    responses = {}
    for i in range(n_windows):
        responses[("parse", i)] = analysis_response()
        responses[("extract", i)] = extraction_response(
            [{"dimension": "C1", "utterance": f"w{i} line", "insight": f"insight number {i}"}]
        )
    responses[("profile", 0)] = "C1: a claim. [ev-1]\n"
    return LlmClient.mock(responses)


def _config():
    from streamprofile.schema import SessionConfig

    return SessionConfig(window_seconds=60.0, llm_backend="mock", mock_dir="unused")


class TestRunCycle:
    def test_applies_fixture_tuples(self):
        config = _config()
        client = _mock_client()
        state = SessionState.fresh(config, client)
        window = make_window(["w0 line"], index=0)
        run_cycle(state, window)
        assert state.windows_processed == 1
        assert state.accepted == 1
        assert state.history.entries != ()

    def test_empty_window_only_advances_counter(self):
        from streamprofile.schema import DialogueWindow

        config = _config()
        state = SessionState.fresh(config, _mock_client())
        window = DialogueWindow(index=0, segments=(), window_start=0, window_end=60)
        run_cycle(state, window)
        assert state.windows_processed == 1
        assert len(state.memory) == 0
        assert state.history.entries == ()

    def test_mock_miss_skips_and_preserves_state(self):
        config = _config()
        state = SessionState.fresh(config, LlmClient.mock({}))
        window = make_window(["hello"], index=0)
        run_cycle(state, window)
        assert state.windows_processed == 1
        assert len(state.memory) == 0
        assert state.skipped[0][0] == 0

    def test_out_of_order_window_rejected(self):
        state = SessionState.fresh(_config(), _mock_client())
        with pytest.raises(ValueError):
            run_cycle(state, make_window(["x"], index=3))

    def test_skip_budget_exhaustion_raises(self):
        from streamprofile.schema import SessionConfig

        config = SessionConfig(
            window_seconds=60.0, llm_backend="mock", mock_dir="unused", max_skipped_windows=1
        )
        state = SessionState.fresh(config, LlmClient.mock({}))
        run_cycle(state, make_window(["a"], index=0))
        with pytest.raises(LlmUnavailable):
            run_cycle(state, make_window(["b"], index=1))


@pytest.mark.parametrize("name", ["s01_teen", "s02_family", "s03_adversarial"])
class TestFixtureSessions:
    def test_streaming_equals_batch(self, fixtures_dir, name):
        config, segments_path, d = _session_paths(fixtures_dir, name)

        streamed = run_session(
            config, SessionSource.from_jsonl(segments_path), session_id=name
        )

        windows = list(window_stream(SessionSource.from_jsonl(segments_path), config.window_seconds))
        from streamprofile.runner import build_client

        batch_state = process_windows(config, windows, build_client(config))
        assert batch_state.memory.dumps() == streamed.memory.dumps()

    def test_fully_grounded(self, fixtures_dir, name):
        config, segments_path, d = _session_paths(fixtures_dir, name)
        result = run_session(config, SessionSource.from_jsonl(segments_path), session_id=name)
        assert result.grounding.total_claims > 0
        assert result.grounding.grounded_claims == result.grounding.total_claims
        assert result.grounding.violations == ()

    def test_two_runs_byte_identical(self, fixtures_dir, tmp_path, name):
        config, segments_path, d = _session_paths(fixtures_dir, name)
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / run
            run_session(
                config,
                SessionSource.from_jsonl(segments_path),
                out_dir=out,
                session_id=name,
                enrollment=json.loads((d / "enrollment.json").read_text("utf-8")),
            )
            outputs.append(
                {
                    p.name: p.read_bytes()
                    for p in sorted(out.iterdir())
                    if p.name != "audit.jsonl"  # timestamps; explicitly volatile
                }
            )
        assert outputs[0] == outputs[1]

    def test_corrected_roles_match_truth(self, fixtures_dir, name):
        config, segments_path, d = _session_paths(fixtures_dir, name)
        truth = json.loads((d / "truth.json").read_text("utf-8"))
        result = run_session(
            config,
            SessionSource.from_jsonl(segments_path),
            session_id=name,
            enrollment=json.loads((d / "enrollment.json").read_text("utf-8")),
        )
        assert [s.role for s in result.corrected_segments] == truth["roles"]


class TestCheckpointResume:
    def test_resume_reaches_identical_memory(self, fixtures_dir, tmp_path):
        config, segments_path, d = _session_paths(fixtures_dir, "s01_teen")
        enrollment = json.loads((d / "enrollment.json").read_text("utf-8"))

        full = run_session(
            config, SessionSource.from_jsonl(segments_path),
            out_dir=tmp_path / "full", session_id="s01", enrollment=enrollment,
        )

        # simulate a crash after two windows: run the prefix, keep its checkpoint
        from streamprofile.runner import build_client

        crash_dir = tmp_path / "crashed"
        crash_dir.mkdir()
        client = build_client(config)
        windows = list(window_stream(SessionSource.from_jsonl(segments_path), config.window_seconds))
        state = SessionState.fresh(config, client)
        for window in windows[:2]:
            run_cycle(state, window)
        save_checkpoint(state, crash_dir / "checkpoint.json")

        resumed = run_session(
            config, SessionSource.from_jsonl(segments_path),
            out_dir=crash_dir, session_id="s01", enrollment=enrollment, resume=True,
        )
        assert resumed.memory.dumps() == full.memory.dumps()
        assert (
            (crash_dir / "s01.profile.json").read_bytes()
            == (tmp_path / "full" / "s01.profile.json").read_bytes()
        )

    def test_checkpoint_round_trip(self, tmp_path):
        config = _config()
        client = _mock_client(2)
        state = SessionState.fresh(config, client)
        run_cycle(state, make_window(["w0 line"], index=0))
        run_cycle(state, make_window(["w1 line"], index=1))
        path = tmp_path / "checkpoint.json"
        save_checkpoint(state, path)
        loaded = load_checkpoint(path, config, client)
        assert loaded.windows_processed == 2
        assert loaded.memory.dumps() == state.memory.dumps()
        assert loaded.history == state.history


class TestEdgeSessions:
    def test_zero_segment_source(self, tmp_path):
        config = _config()
        result = run_session(
            config,
            SessionSource(kind="replay-file", segments=[]),
            out_dir=tmp_path,
            session_id="empty",
            client=LlmClient.mock({}),
        )
        assert result.profile.claims == ()
        assert len(result.memory) == 0
        assert (tmp_path / "empty.profile.json").exists()

    def test_replay_speed_zero_and_one_identical(self, fixtures_dir, tmp_path):
        # scale timestamps down so 1x replay stays fast
        config, segments_path, d = _session_paths(fixtures_dir, "s03_adversarial")
        scaled = tmp_path / "scaled.jsonl"
        lines = []
        for line in segments_path.read_text("utf-8").splitlines():
            obj = json.loads(line)
            obj["t_start"] /= 400.0
            obj["t_end"] /= 400.0
            lines.append(json.dumps(obj, ensure_ascii=False))
        scaled.write_text("\n".join(lines) + "\n", encoding="utf-8")
        from streamprofile.schema import SessionConfig

        fast_config = SessionConfig(
            window_seconds=config.window_seconds / 400.0,
            llm_backend="mock",
            mock_dir=config.mock_dir,
        )
        results = []
        for speed in (0.0, 1.0):
            result = run_session(
                fast_config,
                SessionSource.from_jsonl(scaled, replay_speed=speed),
                session_id="scaled",
            )
            results.append((result.memory.dumps(), result.report))
        assert results[0] == results[1]
