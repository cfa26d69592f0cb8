from __future__ import annotations

import json
import math
import random
import threading

import pytest
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.metrics.pairwise import cosine_similarity

from evtrecover.memory import (CaseMemory, CorpusStats, MemoryEntry, MemoryMeta, MemoryPersistenceError,
                               cosine, rank_key, score, tokenize, vectorize)
from evtrecover.reasoning import FailureContext, InsightTag, MovementPlan, RecoverySequence, ReflectionInsight

from oracles import brute_force_top3, random_entry, random_plan, random_psi


def sklearn_scores(mem, psi, gamma):
    docs = [t for e in mem.entries for t in (e.psi_text, e.gamma_text)] + [psi.to_text(), gamma.to_text()]
    vec = TfidfVectorizer(tokenizer=tokenize, lowercase=False, token_pattern=None, smooth_idf=True, norm=None)
    X = vec.fit_transform(docs)
    q_psi, q_gamma = X[-2], X[-1]
    out = []
    for i in range(len(mem)):
        out.append(cosine_similarity(q_psi, X[2 * i])[0, 0] + cosine_similarity(q_gamma, X[2 * i + 1])[0, 0])
    return out


class TestVectors:
    def test_tokenize(self):
        assert tokenize("occ=1; obj=Column at center, 3.0 m") == ["occ", "1", "obj", "column", "at", "center",
                                                                   "3", "0", "m"]

    def test_empty_text_is_zero_vector(self):
        assert vectorize("", CorpusStats(1, {"a": 1})) == {}

    def test_idf_minimum_is_one(self):
        stats = CorpusStats(0, {}).with_documents(["a b", "a c", "a"])
        assert stats.idf("a") == 1.0
        assert stats.idf("b") == pytest.approx(math.log(4 / 2) + 1)

    def test_identical_vectors(self):
        stats = CorpusStats(0, {}).with_documents(["a b b"])
        assert vectorize("a b b", stats) == vectorize("a b b", stats)

    def test_cosine_bounds(self):
        assert cosine({"a": 1.0}, {"b": 1.0}) == 0.0
        assert cosine({"a": 2.0, "b": 1.0}, {"a": 2.0, "b": 1.0}) == pytest.approx(1.0)
        assert cosine({}, {"a": 1.0}) == 0.0


class TestScore:
    psi = FailureContext(1, "column at center, 3.0 m")
    gamma = MovementPlan.from_list([["move_forward", "until_passing", "column"], ["turn_right", "none", None]])
    r = RecoverySequence(("MoveForward",) * 4 + ("TurnRight",))

    def test_self_similarity(self):
        entry = MemoryEntry(self.psi, self.gamma, self.r, None, MemoryMeta(outcome="recovered"), id=1)
        stats = CorpusStats(0, {}).with_documents([entry.psi_text, entry.gamma_text] * 2)
        assert score(self.psi, self.gamma, entry, stats) == pytest.approx(2.0, abs=1e-12)

    def test_disjoint(self):
        # psi texts share the "occ", "obj", "last" scaffolding, so compare bare tokens here
        stats = CorpusStats(0, {}).with_documents(["alpha beta", "gamma delta"])
        assert cosine(vectorize("alpha beta", stats), vectorize("gamma delta", stats)) == 0.0

    def test_hand_computed_three_document_corpus(self):
        # corpus: "a b", "a c", "b c"; idf(x) = ln(4/3) + 1 for every token (df = 2)
        stats = CorpusStats(0, {}).with_documents(["a b", "a c", "b c"])
        w = math.log(4 / 3) + 1
        assert stats.idf("a") == pytest.approx(w)
        # equal weights, so cos("a b", "a c") = 1/2
        assert cosine(vectorize("a b", stats), vectorize("a c", stats)) == pytest.approx(0.5)

    def test_one_shared_field(self):
        mem = CaseMemory()
        other_gamma = MovementPlan.from_list([["jump_over", "none", None]])
        mem.append(MemoryEntry(self.psi, other_gamma, self.r, None, MemoryMeta(outcome="recovered")))
        (hit,) = mem.retrieve_top3(self.psi, self.gamma)
        assert hit.psi_similarity == pytest.approx(1.0)
        assert hit.gamma_similarity == 0.0
        assert 0.0 < hit.score <= 1.0
        assert hit.score == pytest.approx(sklearn_scores(mem, self.psi, self.gamma)[0], abs=1e-12)


class TestRetrieval:
    def test_empty_store(self):
        assert CaseMemory().retrieve_top3(TestScore.psi, TestScore.gamma) == []

    def test_fewer_than_k(self):
        rng = random.Random(3)
        mem = CaseMemory()
        for _ in range(2):
            mem.append(random_entry(rng))
        out = mem.retrieve_top3(TestScore.psi, TestScore.gamma)
        assert len(out) == 2
        assert [rank_key(s) for s in out] == sorted(rank_key(s) for s in out)

    def test_identical_entry_ranks_first(self):
        rng = random.Random(4)
        mem = CaseMemory()
        for _ in range(10):
            mem.append(random_entry(rng))
        target = mem.append(MemoryEntry(TestScore.psi, TestScore.gamma, TestScore.r, None,
                                        MemoryMeta(outcome="recovered")))
        for _ in range(10):
            mem.append(random_entry(rng))
        top = mem.retrieve_top3(TestScore.psi, TestScore.gamma)[0]
        assert top.entry.id == target.id
        assert top.score == pytest.approx(2.0, abs=1e-12)

    def test_ties_prefer_newest(self):
        mem = CaseMemory()
        e = MemoryEntry(TestScore.psi, TestScore.gamma, TestScore.r, None, MemoryMeta(outcome="recovered"))
        ids = [mem.append(e).id for _ in range(5)]
        assert [s.entry.id for s in mem.retrieve_top3(TestScore.psi, TestScore.gamma)] == ids[::-1][:3]

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_sklearn_and_brute_force(self, seed):
        rng = random.Random(seed)
        mem = CaseMemory()
        for _ in range(rng.randint(1, 100)):
            mem.append(random_entry(rng))
        psi, gamma = random_psi(rng), random_plan(rng)
        got = mem.score_all(psi, gamma)
        ref = sklearn_scores(mem, psi, gamma)
        assert [s.score for s in got] == pytest.approx(ref, abs=1e-9)
        assert [s.entry.id for s in mem.retrieve_top3(psi, gamma)] == brute_force_top3(mem, psi, gamma)

    def test_scores_bounded(self):
        rng = random.Random(9)
        mem = CaseMemory()
        for _ in range(50):
            mem.append(random_entry(rng))
        for s in mem.score_all(random_psi(rng), random_plan(rng)):
            assert 0.0 <= s.score <= 2.0


class TestAppend:
    def test_ids_strictly_increase(self):
        rng = random.Random(0)
        mem = CaseMemory()
        ids = [mem.append(random_entry(rng)).id for _ in range(5)]
        assert ids == [1, 2, 3, 4, 5]

    def test_timestamp_from_clock(self):
        mem = CaseMemory(clock=lambda: 42.0)
        e = MemoryEntry(TestScore.psi, TestScore.gamma, TestScore.r, None, MemoryMeta(outcome="recovered"))
        assert mem.append(e).meta.ts == 42.0

    def test_recovered_case_has_no_insight(self):
        with pytest.raises(ValueError):
            MemoryEntry(TestScore.psi, TestScore.gamma, TestScore.r, ReflectionInsight.for_tag(InsightTag.NONE),
                        MemoryMeta(outcome="recovered"))

    def test_concurrent_appends(self):
        mem = CaseMemory()
        e = MemoryEntry(TestScore.psi, TestScore.gamma, TestScore.r, None, MemoryMeta(outcome="recovered"))

        def worker():
            for _ in range(50):
                mem.append(e)
                mem.retrieve_top3(TestScore.psi, TestScore.gamma)

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert [x.id for x in mem.entries] == list(range(1, 201))

    def test_entries_are_immutable_snapshots(self):
        mem = CaseMemory()
        snap = mem.entries
        mem.append(random_entry(random.Random(1)))
        assert len(snap) == 0 and len(mem) == 1


class TestPersistence:
    def test_reload_gives_identical_scores(self, tmp_path):
        rng = random.Random(11)
        path = tmp_path / "mem.jsonl"
        mem = CaseMemory(path)
        for _ in range(40):
            mem.append(random_entry(rng))
        again = CaseMemory(path)
        assert len(again) == 40
        for _ in range(10):
            psi, gamma = random_psi(rng), random_plan(rng)
            a = mem.score_all(psi, gamma)
            b = again.score_all(psi, gamma)
            assert [x.score for x in a] == pytest.approx([x.score for x in b], abs=1e-12)
            assert [x.entry.id for x in mem.retrieve_top3(psi, gamma)] == \
                [x.entry.id for x in again.retrieve_top3(psi, gamma)]

    def test_file_format(self, tmp_path):
        path = tmp_path / "mem.jsonl"
        mem = CaseMemory(path)
        mem.append(MemoryEntry(TestScore.psi, TestScore.gamma, TestScore.r,
                               ReflectionInsight.for_tag(InsightTag.WRONG_SIDE), MemoryMeta(outcome="failed", ts=1.0)))
        header, line = path.read_text().splitlines()
        assert json.loads(header) == {"schema_version": 1}
        rec = json.loads(line)
        assert set(rec) == {"id", "psi", "gamma", "r", "e", "meta"}
        assert rec["e"]["tag"] == "wrong_side"
        assert rec["gamma"][0] == ["move_forward", "until_passing", "column"]

    def test_appends_continue_ids_after_reload(self, tmp_path):
        path = tmp_path / "mem.jsonl"
        rng = random.Random(2)
        CaseMemory(path).append(random_entry(rng))
        assert CaseMemory(path).append(random_entry(rng)).id == 2

    def test_failed_write_leaves_store_unchanged(self, tmp_path):
        mem = CaseMemory(tmp_path / "missing" / "mem.jsonl")
        with pytest.raises(MemoryPersistenceError):
            mem.append(random_entry(random.Random(0)))
        assert len(mem) == 0

    def test_bad_schema_version(self, tmp_path):
        path = tmp_path / "mem.jsonl"
        path.write_text('{"schema_version": 99}\n')
        with pytest.raises(MemoryPersistenceError):
            CaseMemory(path)

    def test_corrupt_line_reports_line_number(self, tmp_path):
        path = tmp_path / "mem.jsonl"
        path.write_text('{"schema_version": 1}\n{"id": 1}\n')
        with pytest.raises(MemoryPersistenceError, match=":2:"):
            CaseMemory(path)
