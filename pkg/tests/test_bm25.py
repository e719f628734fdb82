import math
import random

import pytest

from claimmatch import bm25
from claimmatch.errors import DataError, UsageError

import oracles
import synthgen

THREE_DOCS = [
    ("d1", "d1", "cat sat"),
    ("d2", "d2", "cat cat hat"),
    ("d3", "d3", "dog ran far"),
]


@pytest.fixture
def index():
    return bm25.build_index(THREE_DOCS)


class TestBuild:
    def test_corpus_statistics(self, index):
        assert index.n_units == 3
        assert index.avg_dl == pytest.approx(8 / 3)
        assert index.df("cat") == 2
        assert index.postings["cat"] == {"d1": 1, "d2": 2}

    def test_single_doc(self):
        idx = bm25.build_index([("d", "d", "a")])
        assert idx.avg_dl == 1
        assert idx.postings == {"a": {"d": 1}}

    def test_paragraph_units_map_to_one_article(self):
        units = [(f"a1#{i}", "a1", text) for i, text in enumerate(["one", "two", "three"])]
        idx = bm25.build_index(units, granularity=bm25.PARAGRAPH)
        assert set(idx.unit_to_article.values()) == {"a1"}
        assert idx.n_units == 3

    def test_zero_length_units_count_toward_avg_dl(self):
        idx = bm25.build_index([("d1", "d1", "a b"), ("d2", "d2", "...")])
        assert idx.avg_dl == 1.0
        assert idx.doc_len["d2"] == 0

    def test_empty_collection_rejected(self):
        with pytest.raises(DataError):
            bm25.build_index([])

    def test_full_article_units_must_be_identity(self):
        with pytest.raises(DataError):
            bm25.build_index([("u1", "a1", "text")], granularity=bm25.FULL_ARTICLE)

    def test_default_params(self):
        params = bm25.Bm25Params()
        assert params.k1 == 1.2
        assert params.b == 0.75


class TestIdf:
    def test_hand_value_df2(self, index):
        assert bm25.idf(index, "cat") == pytest.approx(math.log(1.6), abs=1e-9)

    def test_unseen_term(self, index):
        assert bm25.idf(index, "zebra") == pytest.approx(math.log(8), abs=1e-9)

    def test_positive_even_when_term_is_everywhere(self):
        idx = bm25.build_index([("d1", "d1", "x"), ("d2", "d2", "x"), ("d3", "d3", "x")])
        assert bm25.idf(idx, "x") > 0

    def test_strictly_decreasing_in_df(self, index):
        values = []
        for df in range(0, 4):
            values.append(math.log(1 + (3 - df + 0.5) / (df + 0.5)))
        assert all(a > b for a, b in zip(values, values[1:]))
        assert bm25.idf(index, "zebra") > bm25.idf(index, "cat") > bm25.idf(index, "zzz") - 1e9


class TestScore:
    def test_hand_computed_fixture(self, index):
        # tf=1, dl=2, avg_dl=8/3, df=2, k1=1.2, b=0.75
        expected = math.log(1.6) * 1 * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 2 / (8 / 3)))
        assert expected == pytest.approx(0.5235, abs=1e-4)
        assert bm25.score(index, ["cat"], "d1") == pytest.approx(expected, abs=1e-6)

    def test_absent_term_contributes_zero(self, index):
        with_term = bm25.score(index, ["cat"], "d1")
        assert bm25.score(index, ["cat", "zebra"], "d1") == with_term

    def test_empty_query(self, index):
        assert bm25.score(index, [], "d1") == 0.0

    def test_duplicate_query_terms_counted_once(self, index):
        assert bm25.score(index, ["cat", "cat", "cat"], "d1") == bm25.score(index, ["cat"], "d1")

    def test_unknown_unit_errors(self, index):
        with pytest.raises(KeyError):
            bm25.score(index, ["cat"], "nope")

    def test_additive_over_disjoint_term_sets(self, index):
        joint = bm25.score(index, ["cat", "hat"], "d2")
        assert joint == pytest.approx(
            bm25.score(index, ["cat"], "d2") + bm25.score(index, ["hat"], "d2"), abs=1e-12
        )

    def test_b_zero_ignores_document_length(self):
        params = bm25.Bm25Params(b=0.0)
        idx = bm25.build_index(
            [("short", "short", "cat sat"), ("long", "long", "cat " + "pad " * 50)],
            params,
        )
        assert bm25.score(idx, ["cat"], "short") == pytest.approx(
            bm25.score(idx, ["cat"], "long"), abs=1e-12
        )

    def test_b_one_depends_only_on_term_density(self):
        # with b=1 the per-term weight reduces to
        # (k1+1)/(1 + k1*(dl/tf)/avg_dl): self-concatenating a doc keeps
        # its score if avg_dl stays fixed (the other doc compensates)
        params = bm25.Bm25Params(b=1.0)
        base = "cat sat on the mat"
        pad = ["pad%d" % i for i in range(15)]
        single = bm25.build_index(
            [("d", "d", base), ("other", "other", " ".join(pad))], params
        )
        doubled = bm25.build_index(
            [("d", "d", base + " " + base), ("other", "other", " ".join(pad[:10]))], params
        )
        assert single.avg_dl == doubled.avg_dl == 10
        assert bm25.score(single, ["cat"], "d") == pytest.approx(
            bm25.score(doubled, ["cat"], "d"), abs=1e-12
        )


class TestSearch:
    def test_ranking_on_three_docs(self, index):
        result = bm25.search(index, "cat hat", k=2)
        assert result.article_ids() == ["d2", "d1"]

    def test_no_match_query_returns_empty(self, index):
        assert bm25.search(index, "zebra quagga", k=5).entries == []

    def test_k_larger_than_corpus(self, index):
        assert bm25.search(index, "cat", k=100).article_ids() == ["d2", "d1"]

    def test_k_must_be_positive(self, index):
        with pytest.raises(UsageError):
            bm25.search(index, "cat", k=0)

    def test_paragraph_aggregation_takes_best_paragraph(self):
        units = [
            ("a1#0", "a1", "dog dog dog"),
            ("a1#1", "a1", "cat cat cat cat"),
            ("a2#0", "a2", "cat dog"),
        ]
        idx = bm25.build_index(units, granularity=bm25.PARAGRAPH)
        result = bm25.search(idx, "cat", k=2)
        assert result.article_ids()[0] == "a1"
        best = max(bm25.score(idx, ["cat"], uid) for uid in ("a1#0", "a1#1"))
        assert result.entries[0][1] == pytest.approx(best, abs=1e-12)

    def test_article_ranking_invariant_to_paragraph_order(self):
        paragraphs = ["cat sat here", "dogs bark loud", "hat cat fat"]
        forward = [(f"a1#{i}", "a1", p) for i, p in enumerate(paragraphs)]
        backward = [(f"a1#{i}", "a1", p) for i, p in enumerate(reversed(paragraphs))]
        other = ("a2#0", "a2", "cat hat")
        r1 = bm25.search(bm25.build_index(forward + [other], granularity=bm25.PARAGRAPH), "cat hat", 2)
        r2 = bm25.search(bm25.build_index(backward + [other], granularity=bm25.PARAGRAPH), "cat hat", 2)
        assert r1.article_ids() == r2.article_ids()
        assert [s for _, s in r1.entries] == pytest.approx([s for _, s in r2.entries])

    def test_ties_break_by_ascending_article_id(self):
        idx = bm25.build_index([("db", "db", "cat"), ("da", "da", "cat"), ("dc", "dc", "cat")])
        assert bm25.search(idx, "cat", k=3).article_ids() == ["da", "db", "dc"]

    def test_search_scores_match_direct_scoring(self, index):
        result = bm25.search(index, "cat hat sat", k=3)
        for article_id, value in result.entries:
            assert value == bm25.score(index, ["cat", "hat", "sat"], article_id)


class TestOracleEquivalence:
    def test_three_doc_fixture_against_oracle(self, index):
        ours = bm25.search(index, "cat hat", k=3)
        reference = oracles.bm25_rank(THREE_DOCS, "cat hat", k=3)
        assert ours.article_ids() == [aid for aid, _ in reference]
        for (_, a), (_, b) in zip(ours.entries, reference):
            assert a == pytest.approx(b, abs=1e-9)

    def test_random_corpora(self):
        rng = random.Random(1234)
        for _ in range(40):
            units, queries = synthgen.random_bm25_corpus(rng)
            index = bm25.build_index(units)
            for query in queries:
                ours = bm25.search(index, query, k=10)
                reference = oracles.bm25_rank(units, query, k=10)
                assert ours.article_ids() == [aid for aid, _ in reference]
                for (_, a), (_, b) in zip(ours.entries, reference):
                    assert a == pytest.approx(b, abs=1e-9)


class TestPersistence:
    def test_round_trip(self, index, tmp_path):
        path = tmp_path / "idx.json"
        bm25.save_index(index, path)
        loaded = bm25.load_index(path)
        assert loaded.postings == index.postings
        assert loaded.doc_len == index.doc_len
        assert loaded.avg_dl == index.avg_dl
        assert loaded.params == index.params
        assert loaded.granularity == index.granularity
        assert bm25.search(loaded, "cat hat", 3).entries == bm25.search(index, "cat hat", 3).entries

    def test_rejects_non_index_file(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"something": "else"}')
        with pytest.raises(DataError, match="not a BM25 index"):
            bm25.load_index(path)

    def test_rejects_wrong_version(self, index, tmp_path):
        path = tmp_path / "idx.json"
        bm25.save_index(index, path)
        payload = path.read_text().replace('"version": 1', '"version": 99')
        path.write_text(payload)
        with pytest.raises(DataError, match="version"):
            bm25.load_index(path)
