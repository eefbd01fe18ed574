"""Tests for corpus/query ingestion, mining, and batch sampling."""

import json

import numpy as np
import pytest

from mwlab.data import (
    Corpus,
    Document,
    Query,
    QuerySet,
    SplitSpec,
    TrainingBatch,
    load_corpus,
    load_queries,
    mine_hard_negatives,
    sample_batch,
    save_queries,
    split_queries,
)
from mwlab.prng import Xoshiro256StarStar


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


@pytest.fixture
def small_corpus():
    return Corpus([Document(f"d{i}", f"text {i}") for i in range(1, 5)])


class TestLoadCorpus:
    def test_three_valid_lines(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [{"id": f"d{i}", "text": f"doc {i}"} for i in range(3)])
        corpus = load_corpus(path)
        assert len(corpus) == 3
        assert corpus.ids == ["d0", "d1", "d2"]

    def test_duplicate_id_names_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [
            {"id": "d1", "text": "a"},
            {"id": "d2", "text": "b"},
            {"id": "d3", "text": "c"},
            {"id": "d1", "text": "again"},
        ])
        with pytest.raises(ValueError, match="line 4"):
            load_corpus(path)

    def test_empty_file_is_valid(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text("")
        assert len(load_corpus(path)) == 0

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "nope.jsonl")

    def test_malformed_line_reports_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "d1", "text": "ok"}\nnot json\n')
        with pytest.raises(ValueError, match="line 2"):
            load_corpus(path)

    def test_empty_text_rejected(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [{"id": "d1", "text": ""}])
        with pytest.raises(ValueError, match="line 1"):
            load_corpus(path)


class TestLoadQueries:
    def test_valid_reference_accepted(self, tmp_path, small_corpus):
        path = tmp_path / "queries.jsonl"
        write_jsonl(path, [{"id": "q1", "text": "hi", "positive_ids": ["d1"]}])
        queries = load_queries(path, small_corpus)
        assert len(queries) == 1
        assert queries[0].positive_ids == ["d1"]

    def test_empty_positive_ids_rejected(self, tmp_path, small_corpus):
        path = tmp_path / "queries.jsonl"
        write_jsonl(path, [{"id": "q1", "text": "hi", "positive_ids": []}])
        with pytest.raises(ValueError, match="positive_ids"):
            load_queries(path, small_corpus)

    def test_hard_negative_equal_to_positive_rejected(self, tmp_path, small_corpus):
        path = tmp_path / "queries.jsonl"
        write_jsonl(path, [{
            "id": "q1", "text": "hi",
            "positive_ids": ["d1"], "hard_negative_ids": ["d1"],
        }])
        with pytest.raises(ValueError, match="both positive and hard negative"):
            load_queries(path, small_corpus)

    def test_dangling_reference_rejected(self, tmp_path, small_corpus):
        path = tmp_path / "queries.jsonl"
        write_jsonl(path, [{"id": "q1", "text": "hi", "positive_ids": ["ghost"]}])
        with pytest.raises(ValueError, match="ghost"):
            load_queries(path, small_corpus)

    def test_roundtrip_through_save(self, tmp_path, small_corpus):
        queries = QuerySet([
            Query("q1", "alpha", ["d1"], ["d2", "d3"]),
            Query("q2", "beta", ["d2"]),
        ])
        path = tmp_path / "queries.jsonl"
        save_queries(queries, path)
        loaded = load_queries(path, small_corpus)
        assert [q.id for q in loaded] == ["q1", "q2"]
        assert loaded[0].hard_negative_ids == ["d2", "d3"]


class TestMining:
    def test_top_k_excludes_positives(self, small_corpus):
        # scores: d1=0.9 (positive), d2=0.8, d3=0.1, d4=0.5 -> top 2 are d2, d4
        table = {"d1": 0.9, "d2": 0.8, "d3": 0.1, "d4": 0.5}

        def scorer(q_texts, d_texts):
            row = [table[d.id] for d in small_corpus]
            return np.array([row] * len(q_texts))

        queries = QuerySet([Query("q1", "x", ["d1"])])
        mined = mine_hard_negatives(queries, small_corpus, scorer, k=2)
        assert mined.by_id("q1").hard_negative_ids == ["d2", "d4"]
        # input unchanged
        assert queries.by_id("q1").hard_negative_ids == []

    def test_k_zero_rejected(self, small_corpus):
        queries = QuerySet([Query("q1", "x", ["d1"])])
        with pytest.raises(ValueError, match="k must be >= 1"):
            mine_hard_negatives(queries, small_corpus, lambda q, d: np.zeros((1, 4)), k=0)

    def test_tie_broken_by_ascending_id(self):
        corpus = Corpus([Document("b", "t"), Document("a", "t"), Document("pos", "t")])

        def scorer(q_texts, d_texts):
            return np.array([[0.5, 0.5, 0.9]])

        queries = QuerySet([Query("q1", "x", ["pos"])])
        mined = mine_hard_negatives(queries, corpus, scorer, k=1)
        assert mined.by_id("q1").hard_negative_ids == ["a"]

    def test_short_corpus_returns_all_available(self, small_corpus, caplog):
        def scorer(q_texts, d_texts):
            return np.ones((1, len(small_corpus)))

        queries = QuerySet([Query("q1", "x", ["d1"])])
        with caplog.at_level("WARNING"):
            mined = mine_hard_negatives(queries, small_corpus, scorer, k=10)
        assert sorted(mined.by_id("q1").hard_negative_ids) == ["d2", "d3", "d4"]
        assert any("only 3 negatives" in r.getMessage() for r in caplog.records)

    def test_matches_full_sort_brute_force(self):
        rng = np.random.default_rng(11)
        corpus = Corpus([Document(f"d{i:03d}", f"t{i}") for i in range(60)])
        queries = QuerySet([Query(f"q{j}", "x", [f"d{j:03d}"]) for j in range(10)])
        scores = rng.uniform(-1, 1, size=(10, 60)).round(2)  # rounding forces ties

        def scorer(q_texts, d_texts):
            return scores

        mined = mine_hard_negatives(queries, corpus, scorer, k=7)
        for j, q in enumerate(mined):
            expected = sorted(
                (d for d in corpus.ids if d != f"d{j:03d}"),
                key=lambda d: (-scores[j, corpus.index_of(d)], d),
            )[:7]
            assert q.hard_negative_ids == expected


class TestSampleBatch:
    def make_queries(self, n, n_negs=3):
        qs = []
        for i in range(n):
            negs = [f"d{(i + j + 1) % (2 * n)}" for j in range(n_negs)]
            qs.append(Query(f"q{i}", f"text {i}", [f"d{i + 2 * n}"], negs))
        return QuerySet(qs)

    def test_exhaustive_two_queries(self):
        queries = self.make_queries(2, n_negs=0)
        batch = sample_batch(queries, B=2, H=0, rng=Xoshiro256StarStar(0))
        assert {q.id for q in batch.queries} == {"q0", "q1"}
        assert batch.H == 0

    def test_deterministic_under_seed(self):
        queries = self.make_queries(20)
        b1 = sample_batch(queries, B=5, H=2, rng=Xoshiro256StarStar(123))
        b2 = sample_batch(queries, B=5, H=2, rng=Xoshiro256StarStar(123))
        assert [q.id for q in b1.queries] == [q.id for q in b2.queries]
        assert b1.positive_ids == b2.positive_ids
        assert b1.hard_negative_ids == b2.hard_negative_ids

    def test_insufficient_queries(self):
        queries = self.make_queries(2)
        with pytest.raises(ValueError, match="eligible"):
            sample_batch(queries, B=3, H=0, rng=Xoshiro256StarStar(0))

    def test_too_few_hard_negatives_excludes_query(self):
        queries = self.make_queries(4, n_negs=1)
        with pytest.raises(ValueError, match="eligible"):
            sample_batch(queries, B=3, H=2, rng=Xoshiro256StarStar(0))

    def test_shared_positive_batches_redrawn(self):
        # two queries share the only positive; a batch with both is impossible
        queries = QuerySet([
            Query("q0", "a", ["p"]),
            Query("q1", "b", ["p"]),
            Query("q2", "c", ["other"]),
        ])
        for seed in range(10):
            batch = sample_batch(queries, B=2, H=0, rng=Xoshiro256StarStar(seed))
            assert len(set(batch.positive_ids)) == 2

    def test_passage_ids_layout(self):
        queries = self.make_queries(6)
        batch = sample_batch(queries, B=3, H=2, rng=Xoshiro256StarStar(4))
        ids = batch.passage_ids
        assert ids[:3] == batch.positive_ids
        assert ids[3:5] == batch.hard_negative_ids[0]
        assert ids[5:7] == batch.hard_negative_ids[1]


class TestTrainingBatchInvariants:
    def test_duplicate_positives_rejected(self):
        qs = [Query("q0", "a", ["p"]), Query("q1", "b", ["p"])]
        with pytest.raises(ValueError, match="distinct"):
            TrainingBatch(qs, ["p", "p"], [[], []])

    def test_positive_among_own_negatives_rejected(self):
        qs = [Query("q0", "a", ["p0", "x"]), Query("q1", "b", ["p1"])]
        with pytest.raises(ValueError, match="among its hard negatives"):
            TrainingBatch(qs, ["p0", "p1"], [["p0"], ["z"]])

    def test_single_query_rejected(self):
        with pytest.raises(ValueError, match="B >= 2"):
            TrainingBatch([Query("q0", "a", ["p"])], ["p"], [[]])


class TestSplit:
    def test_deterministic_and_disjoint(self):
        queries = QuerySet([Query(f"q{i}", "t", [f"d{i}"]) for i in range(100)])
        spec = SplitSpec(0.8, 0.1, seed=5)
        t1, e1, s1 = split_queries(queries, spec)
        t2, e2, s2 = split_queries(queries, spec)
        assert [q.id for q in t1] == [q.id for q in t2]
        assert [q.id for q in e1] == [q.id for q in e2]
        ids = [q.id for q in t1] + [q.id for q in e1] + [q.id for q in s1]
        assert sorted(ids) == sorted(q.id for q in queries)
        assert len(t1) == 80 and len(e1) == 10 and len(s1) == 10

    def test_fraction_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(0.9, 0.2, seed=0)
        with pytest.raises(ValueError):
            SplitSpec(0.0, 0.5, seed=0)
