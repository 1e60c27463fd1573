"""Evidence memory: bigram Jaccard, dedup behavior, persistence."""

import random
import string

import pytest
from hypothesis import given, strategies as st

from streamprofile.errors import CorruptDump, UnknownDimension
from streamprofile.hem import HierarchicalEvidenceMemory, bigram_jaccard
from streamprofile.schema import EvidenceTuple

from helpers import jaccard_by_enumeration, make_window


def _tuple(schema, text, insight, dim="C1", window_index=0):
    window = make_window([text], index=window_index)
    return EvidenceTuple.create(schema, window, dim, text, insight)


class TestBigramJaccard:
    def test_identical(self):
        assert bigram_jaccard("abcd", "abcd") == 1.0

    def test_shifted_ascii(self):
        # {ab,bc,cd} vs {bc,cd,de}: 2 shared of 4 total
        assert bigram_jaccard("abcd", "bcde") == 0.5

    def test_shifted_cjk(self):
        assert bigram_jaccard("我很难过", "我很难受") == 0.5

    def test_disjoint(self):
        assert bigram_jaccard("ab", "cd") == 0.0

    def test_degenerate_strings(self):
        assert bigram_jaccard("", "") == 1.0
        assert bigram_jaccard("a", "b") == 1.0  # no bigrams on either side
        assert bigram_jaccard("", "ab") == 0.0
        assert bigram_jaccard("x", "ab") == 0.0

    def test_nfc_normalization(self):
        assert bigram_jaccard("café", "café") == 1.0

    @given(st.text(max_size=40), st.text(max_size=40))
    def test_symmetric_bounded_reflexive(self, s1, s2):
        j = bigram_jaccard(s1, s2)
        assert 0.0 <= j <= 1.0
        assert j == bigram_jaccard(s2, s1)
        assert bigram_jaccard(s1, s1) == 1.0

    def test_matches_enumeration_oracle(self):
        rng = random.Random(99)
        alphabet = string.ascii_lowercase + "我很难过受心情低落家人朋友学校 "
        for _ in range(1000):
            s1 = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
            s2 = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40)))
            assert bigram_jaccard(s1, s2) == jaccard_by_enumeration(s1, s2)


class TestStore:
    def test_empty_dimension_accepts(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        result = mem.store(_tuple(schema, "hello world", "conflict with father"), 0.7)
        assert result.accepted
        assert result.entry.id == "ev-1"
        assert result.entry.max_similarity_at_insert == 0.0

    def test_identical_insight_rejected(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        first = mem.store(_tuple(schema, "hello world", "conflict with father"), 0.7)
        again = mem.store(_tuple(schema, "other words", "conflict with father", window_index=1), 0.7)
        assert not again.accepted
        assert again.similarity == 1.0
        assert again.conflicting_id == first.entry.id

    def test_distinct_insights_accepted(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        mem.store(_tuple(schema, "w1", "conflict with father"), 0.7)
        assert bigram_jaccard("conflict with father", "sleeps poorly on school nights") < 0.7
        result = mem.store(_tuple(schema, "w2", "sleeps poorly on school nights"), 0.7)
        assert result.accepted

    def test_same_insight_in_other_dimension_accepted(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        assert mem.store(_tuple(schema, "w1", "often argues at home", dim="C1"), 0.7).accepted
        assert mem.store(_tuple(schema, "w1", "often argues at home", dim="E2"), 0.7).accepted

    def test_exact_threshold_rejected(self, schema):
        # bigram_jaccard("abcd", "abcde") = 3/4; use a pair at exactly 0.75
        assert bigram_jaccard("abcd", "abcde") == 0.75
        mem = HierarchicalEvidenceMemory(schema)
        mem.store(_tuple(schema, "w", "abcd"), 0.75)
        result = mem.store(_tuple(schema, "w", "abcde"), 0.75)
        assert not result.accepted
        assert result.similarity == 0.75

    def test_unknown_dimension_recheck(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        good = _tuple(schema, "w", "insight")
        bad = EvidenceTuple(
            dimension_id="Z9",
            utterance=good.utterance,
            insight=good.insight,
            window_index=0,
            t_start=0,
            t_end=1,
        )
        with pytest.raises(UnknownDimension):
            mem.store(bad, 0.7)

    def test_idempotent_rejection(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        t = _tuple(schema, "w", "some particular insight")
        assert mem.store(t, 0.7).accepted
        for _ in range(3):
            assert not mem.store(t, 0.7).accepted
        assert len(mem) == 1

    def test_invariant_holds_under_near_duplicate_flood(self, schema):
        rng = random.Random(5)
        base = "经常和父亲发生激烈争吵感到无助"
        mem = HierarchicalEvidenceMemory(schema)
        for i in range(200):
            insight = base
            for _ in range(rng.randint(0, 6)):
                pos = rng.randrange(len(insight))
                insight = insight[:pos] + rng.choice("的了很在我不") + insight[pos + 1:]
            mem.store(_tuple(schema, "w", insight, window_index=i), 0.7)
            mem.check_invariants(0.7)


class TestRetrieve:
    def test_fresh_memory_empty(self, schema):
        assert HierarchicalEvidenceMemory(schema).retrieve() == []

    def test_schema_order_then_insertion_order(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        mem.store(_tuple(schema, "w1", "first b2 insight", dim="B2"), 0.7)
        mem.store(_tuple(schema, "w2", "an a1 insight", dim="A1"), 0.7)
        mem.store(_tuple(schema, "w3", "second b2 note entirely different", dim="B2"), 0.7)
        ids = [e.tuple.dimension_id for e in mem.retrieve()]
        assert ids == ["A1", "B2", "B2"]
        b2 = mem.retrieve("B2")
        assert [e.id for e in b2] == ["ev-1", "ev-3"]

    def test_filter_unknown_dimension(self, schema):
        with pytest.raises(UnknownDimension):
            HierarchicalEvidenceMemory(schema).retrieve("Q1")


class TestPersistence:
    def _populated(self, schema):
        mem = HierarchicalEvidenceMemory(schema)
        mem.store(_tuple(schema, "我和爸爸吵架", "父子冲突频繁", dim="C1"), 0.7)
        mem.store(_tuple(schema, "I can't sleep", "sleep disruption", dim="A1", window_index=2), 0.7)
        mem.store(_tuple(schema, "考试压力很大", "severe exam stress", dim="C4", window_index=3), 0.7)
        return mem

    def test_round_trip(self, tmp_path, schema):
        mem = self._populated(schema)
        path = mem.persist(tmp_path / "hem.json")
        restored = HierarchicalEvidenceMemory.restore(path, schema)
        assert restored.to_dict() == mem.to_dict()
        assert restored.dumps() == mem.dumps()
        # id counter resumes correctly
        result = restored.store(_tuple(schema, "new", "totally new material", dim="D1"), 0.7)
        assert result.entry.id == "ev-4"

    def test_empty_round_trip(self, tmp_path, schema):
        mem = HierarchicalEvidenceMemory(schema)
        path = mem.persist(tmp_path / "hem.json")
        restored = HierarchicalEvidenceMemory.restore(path, schema)
        assert len(restored) == 0
        assert restored.dumps() == mem.dumps()

    def test_truncated_dump(self, tmp_path, schema):
        mem = self._populated(schema)
        path = mem.persist(tmp_path / "hem.json")
        raw = path.read_text("utf-8")
        path.write_text(raw[: len(raw) // 2], encoding="utf-8")
        with pytest.raises(CorruptDump):
            HierarchicalEvidenceMemory.restore(path, schema)

    def test_unknown_dimension_in_dump(self, tmp_path, schema):
        mem = self._populated(schema)
        doc = mem.to_dict()
        doc["dimensions"]["Z1"] = doc["dimensions"].pop("C1")
        with pytest.raises(CorruptDump):
            HierarchicalEvidenceMemory.from_dict(doc, schema)

    def test_replay_reproduces_dump_bytes(self, schema):
        tuples = [
            _tuple(schema, "w1", "father conflict", dim="C1"),
            _tuple(schema, "w2", "father conflict", dim="C1", window_index=1),  # duplicate
            _tuple(schema, "w3", "poor sleep hygiene", dim="A1", window_index=1),
            _tuple(schema, "w4", "bullied by classmates", dim="E7", window_index=2),
        ]
        first = HierarchicalEvidenceMemory(schema)
        for t in tuples:
            first.store(t, 0.7)
        second = HierarchicalEvidenceMemory(schema)
        for t in tuples:
            second.store(t, 0.7)
        assert first.dumps() == second.dumps()
