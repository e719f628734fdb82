import random
import statistics

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimmatch.errors import DataError
from claimmatch.evaluation import (
    EmbeddingCosineScorer,
    PairScorer,
    average_precision_at_k,
    evaluate_matcher,
    evaluate_retrieval,
    kfold_split,
    match_report_json,
    qrels_from_corpus,
    read_qrels,
    read_run,
    reciprocal_rank,
    render_retrieval_table,
    retrieval_report_json,
    write_qrels,
    write_run,
)
from claimmatch.mining import LabeledDataset, MiningConfig, assemble, mine_random
from claimmatch.corpus import Pair
from claimmatch.providers import HashedEmbedder
from claimmatch.ranking import RankedList

import oracles
import synthgen


def ranking(*ids):
    return RankedList(query_id="q", entries=[(aid, 1.0 / (i + 1)) for i, aid in enumerate(ids)])


class TestReciprocalRank:
    def test_rank_one(self):
        assert reciprocal_rank(ranking("a", "b"), {"a"}) == 1.0

    def test_rank_four(self):
        assert reciprocal_rank(ranking("x", "y", "z", "a"), {"a"}) == 0.25

    def test_absent(self):
        assert reciprocal_rank(ranking("x", "y"), {"a"}) == 0.0


class TestAveragePrecision:
    def test_single_relevant_rank_three(self):
        assert average_precision_at_k(ranking("x", "y", "a", "z", "w"), {"a"}, 5) == pytest.approx(
            1 / 3, abs=1e-9
        )

    def test_single_relevant_outside_k(self):
        assert average_precision_at_k(ranking("x", "y", "a"), {"a"}, 2) == 0.0

    def test_two_relevant_hand_value(self):
        assert average_precision_at_k(ranking("a", "x", "b", "y"), {"a", "b"}, 4) == pytest.approx(
            0.8333333333, abs=1e-9
        )

    def test_perfect_topk(self):
        assert average_precision_at_k(ranking("a", "b"), {"a", "b"}, 2) == 1.0

    def test_normalizer_is_min_of_relevant_and_k(self):
        # 3 relevant, K=2, both top slots relevant -> (1 + 1)/2
        assert average_precision_at_k(ranking("a", "b"), {"a", "b", "c"}, 2) == 1.0


class TestEvaluateRetrieval:
    def test_mrr_hand_value(self):
        run = {
            "q1": ranking("a", "x"),
            "q2": ranking("x", "a"),
            "q3": ranking("x", "y", "z", "a"),
        }
        qrels = {"q1": {"a"}, "q2": {"a"}, "q3": {"a"}}
        metrics = evaluate_retrieval(run, qrels, ks=[1, 5])
        assert metrics.mrr == pytest.approx(0.5833333333, abs=1e-9)
        assert metrics.n_queries == 3

    def test_map1_equals_hit_rate_for_single_relevant(self):
        run = {"q1": ranking("a"), "q2": ranking("x", "a")}
        qrels = {"q1": {"a"}, "q2": {"a"}}
        metrics = evaluate_retrieval(run, qrels, ks=[1])
        assert metrics.map_at[1] == 0.5

    def test_queries_missing_from_run_score_zero(self):
        run = {"q1": ranking("a")}
        qrels = {"q1": {"a"}, "q2": {"b"}}
        metrics = evaluate_retrieval(run, qrels, ks=[1])
        assert metrics.map_at[1] == 0.5
        assert metrics.mrr == 0.5

    def test_run_query_without_qrels_is_an_error(self):
        with pytest.raises(DataError, match="q9"):
            evaluate_retrieval({"q9": ranking("a")}, {"q1": {"a"}}, ks=[1])

    def test_query_order_does_not_matter(self):
        rng = random.Random(3)
        run, qrels = synthgen.random_run_and_qrels(rng)
        shuffled_run = dict(sorted(run.items(), reverse=True))
        a = evaluate_retrieval(run, qrels, ks=[1, 5])
        b = evaluate_retrieval(shuffled_run, qrels, ks=[1, 5])
        assert a.map_at == b.map_at and a.mrr == b.mrr

    def test_oracle_equivalence_on_random_instances(self):
        rng = random.Random(77)
        for _ in range(50):
            run, qrels = synthgen.random_run_and_qrels(rng)
            metrics = evaluate_retrieval(run, qrels, ks=[1, 5, 10])
            map_ref, mrr_ref = oracles.mean_metrics(run, qrels, [1, 5, 10])
            for k in (1, 5, 10):
                assert metrics.map_at[k] == pytest.approx(map_ref[k], abs=1e-12)
            assert metrics.mrr == pytest.approx(mrr_ref, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_map_at_k_monotone_in_k_for_single_relevant_qrels(self, seed):
        # monotonicity in K holds when each query has one relevant article
        # (the corpus regime here); with R relevant and K < R the
        # min(R, K) normalizer grows with K and can outpace late hits
        rng = random.Random(seed)
        run, qrels = synthgen.random_run_and_qrels(rng, max_relevant=1)
        ks = [1, 2, 3, 5, 8, 13, 21, 50]
        metrics = evaluate_retrieval(run, qrels, ks=ks)
        values = [metrics.map_at[k] for k in ks]
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))
        assert all(0.0 <= v <= 1.0 for v in values)

    def test_single_relevant_map_bounded_by_mrr(self):
        # with one relevant doc per query, AP@K = 1/rank if rank <= K else 0
        rng = random.Random(11)
        for _ in range(20):
            run, qrels = synthgen.random_run_and_qrels(rng)
            singles = {q: {next(iter(rel))} for q, rel in qrels.items()}
            metrics = evaluate_retrieval(run, singles, ks=[5, 10_000])
            assert metrics.map_at[5] <= metrics.mrr + 1e-12
            assert metrics.map_at[10_000] == pytest.approx(metrics.mrr, abs=1e-12)


def balanced_dataset(n=100, seed=0):
    pairs = []
    for i in range(n // 2):
        pairs.append(Pair(tweet_id=f"t{i}", article_id=f"a{i}", label="match"))
        pairs.append(
            Pair(tweet_id=f"t{i}", article_id=f"a{(i + 1) % (n // 2)}", label="not_match")
        )
    rng = random.Random(seed)
    rng.shuffle(pairs)
    return LabeledDataset(pairs=pairs, partition="en-en")


class TestKFold:
    def test_stratified_sizes(self):
        folds = kfold_split(balanced_dataset(100), k=5, seed=1)
        for train, test in folds:
            assert len(test) == 20
            assert sum(1 for p in test if p.label == "match") == 10
            assert len(train) == 80

    def test_test_folds_partition_dataset(self):
        dataset = balanced_dataset(102)
        folds = kfold_split(dataset, k=5, seed=3)
        seen = [p.key for _, test in folds for p in test]
        assert len(seen) == len(dataset)
        assert set(seen) == {p.key for p in dataset.pairs}

    def test_same_seed_same_folds(self):
        dataset = balanced_dataset(60)
        assert kfold_split(dataset, 5, seed=9) == kfold_split(dataset, 5, seed=9)
        assert kfold_split(dataset, 5, seed=9) != kfold_split(dataset, 5, seed=10)

    def test_too_small_rejected(self):
        dataset = LabeledDataset(
            pairs=[
                Pair(tweet_id="t1", article_id="a1", label="match"),
                Pair(tweet_id="t1", article_id="a2", label="not_match"),
            ],
            partition="en-en",
        )
        with pytest.raises(DataError, match="too small"):
            kfold_split(dataset, k=5)

    def test_single_label_rejected(self):
        pairs = [Pair(tweet_id=f"t{i}", article_id=f"a{i}", label="match") for i in range(10)]
        with pytest.raises(DataError, match="both labels"):
            kfold_split(LabeledDataset(pairs=pairs, partition="x"), k=5)

    def test_group_by_article_keeps_articles_together(self):
        dataset = balanced_dataset(80)
        folds = kfold_split(dataset, k=4, seed=2, group_by_article=True)
        for fold_idx, (train, test) in enumerate(folds):
            test_articles = {p.article_id for p in test}
            train_articles = {p.article_id for p in train}
            assert not test_articles & train_articles


class ConstantScorer(PairScorer):
    name = "always-match"

    def score(self, tweet_text, article_text):
        return 1.0


class OracleScorer(PairScorer):
    """Knows the planted truth: tweet tN matches article aN."""

    name = "oracle"

    def __init__(self, truth):
        self.truth = truth
        self.calls = []

    def score(self, tweet_text, article_text):
        self.calls.append((tweet_text, article_text))
        return 1.0 if self.truth.get(tweet_text) == article_text else 0.0


class TestEvaluateMatcher:
    def test_hand_confusion_fixture(self):
        # TP=8 FP=2 FN=1 TN=9 -> acc 0.85, F1+ 0.8421, F1- 0.8571
        from claimmatch.evaluation import _fold_metrics

        pairs, predictions = [], []
        for _ in range(8):
            pairs.append(Pair(tweet_id="t", article_id="a", label="match"))
            predictions.append("match")
        for _ in range(2):
            pairs.append(Pair(tweet_id="t", article_id="a", label="not_match"))
            predictions.append("match")
        for _ in range(1):
            pairs.append(Pair(tweet_id="t", article_id="a", label="match"))
            predictions.append("not_match")
        for _ in range(9):
            pairs.append(Pair(tweet_id="t", article_id="a", label="not_match"))
            predictions.append("not_match")
        metrics = _fold_metrics(pairs, predictions)
        assert metrics.accuracy == pytest.approx(0.85, abs=1e-4)
        assert metrics.f1_match == pytest.approx(0.8421, abs=1e-4)
        assert metrics.f1_not_match == pytest.approx(0.8571, abs=1e-4)

    def test_constant_match_scorer_on_balanced_data(self):
        corpus = synthgen.en_corpus(n_articles=10, n_tweets=50, seed=2)
        positives = corpus.positives("en-en")
        negatives = mine_random(corpus, MiningConfig(strategy="random", seed=1), "en-en")
        dataset = assemble(positives, negatives, seed=1, partition="en-en")
        folds = kfold_split(dataset, k=5, seed=1)
        report = evaluate_matcher(ConstantScorer(), dataset, folds, corpus)
        assert report.mean_accuracy == pytest.approx(0.5, abs=1e-9)
        assert report.mean_f1_match == pytest.approx(2 / 3, abs=1e-9)
        assert report.mean_f1_not_match == 0.0

    def test_perfect_scorer(self):
        corpus = synthgen.en_corpus(n_articles=10, n_tweets=50, seed=2)
        from claimmatch.corpus import query_text

        truth = {
            query_text(corpus.tweets[p.tweet_id]): p.article_id for p in corpus.positives("en-en")
        }

        class Perfect(PairScorer):
            name = "perfect"

            def score(self, tweet_text, article_text):
                return 1.0 if truth.get(tweet_text) else 0.0

        # perfect on positives; negatives pair tweets with wrong articles,
        # so key on (tweet, article) instead
        class Perfect2(PairScorer):
            name = "perfect2"

            def __init__(self, corpus):
                self.texts = {}
                for p in corpus.positives("en-en"):
                    t = corpus.tweets[p.tweet_id]
                    from claimmatch.corpus import full_text

                    self.texts[(query_text(t), full_text(corpus.articles[p.article_id], include_title=False))] = True

            def score(self, tweet_text, article_text):
                return 1.0 if (tweet_text, article_text) in self.texts else 0.0

        positives = corpus.positives("en-en")
        negatives = mine_random(corpus, MiningConfig(strategy="random", seed=4), "en-en")
        dataset = assemble(positives, negatives, seed=4, partition="en-en")
        folds = kfold_split(dataset, k=5, seed=4)
        report = evaluate_matcher(Perfect2(corpus), dataset, folds, corpus)
        assert report.mean_accuracy == 1.0
        assert report.mean_f1_match == 1.0
        assert report.mean_f1_not_match == 1.0

    def test_mean_and_std_over_folds(self):
        corpus = synthgen.en_corpus(n_articles=10, n_tweets=50, seed=2)
        positives = corpus.positives("en-en")
        negatives = mine_random(corpus, MiningConfig(strategy="random", seed=1), "en-en")
        dataset = assemble(positives, negatives, seed=1, partition="en-en")
        folds = kfold_split(dataset, k=5, seed=1)
        scorer = EmbeddingCosineScorer(HashedEmbedder(dim=64), threshold=0.675)
        report = evaluate_matcher(scorer, dataset, folds, corpus)
        accs = [f.accuracy for f in report.folds]
        assert report.mean_accuracy == pytest.approx(statistics.fmean(accs))
        assert report.std_accuracy == pytest.approx(statistics.pstdev(accs))
        assert len(report.folds) == 5

    def test_report_json_shape(self):
        corpus = synthgen.en_corpus(n_articles=10, n_tweets=50, seed=2)
        positives = corpus.positives("en-en")
        negatives = mine_random(corpus, MiningConfig(strategy="random", seed=1), "en-en")
        dataset = assemble(positives, negatives, seed=1, partition="en-en")
        folds = kfold_split(dataset, k=5, seed=1)
        report = evaluate_matcher(ConstantScorer(), dataset, folds, corpus)
        payload = match_report_json(report)
        assert payload["partition"] == "en-en"
        assert len(payload["folds"]) == 5
        assert set(payload["accuracy"]) == {"mean", "std"}


class TestScorerContract:
    def test_score_in_unit_interval_and_threshold_labels(self):
        scorer = EmbeddingCosineScorer(HashedEmbedder(dim=64), threshold=0.9)
        value = scorer.score("kerala dam", "kerala dam")
        assert value == pytest.approx(1.0, abs=1e-9)
        assert scorer.predict("kerala dam", "kerala dam") == "match"
        assert scorer.predict("kerala dam", "unrelated election story") == "not_match"

    def test_default_threshold(self):
        assert EmbeddingCosineScorer(HashedEmbedder(dim=64)).threshold == 0.5


class TestTrecIO:
    def test_run_round_trip(self, tmp_path):
        runs = {
            "q2": RankedList(query_id="q2", entries=[("a1", 2.5), ("a2", 1.25)]),
            "q1": RankedList(query_id="q1", entries=[("a3", 0.5)]),
        }
        path = tmp_path / "system.run"
        write_run(path, runs, "bm25-full")
        text = path.read_text()
        assert text.splitlines()[0] == "q1 Q0 a3 1 0.500000 bm25-full"
        loaded, system = read_run(path)
        assert system == "bm25-full"
        assert loaded["q2"].article_ids() == ["a1", "a2"]

    def test_qrels_round_trip(self, tmp_path):
        qrels = {"q1": {"a1", "a2"}, "q2": {"a9"}}
        path = tmp_path / "gold.qrels"
        write_qrels(path, qrels)
        assert read_qrels(path) == qrels
        assert path.read_text().splitlines()[0] == "q1 0 a1 1"

    def test_malformed_run_rejected(self, tmp_path):
        path = tmp_path / "bad.run"
        path.write_text("q1 Q0 a1 1\n")
        with pytest.raises(DataError, match="6 whitespace-delimited"):
            read_run(path)


class TestReportRendering:
    def test_retrieval_json_shape(self):
        run = {"q1": ranking("a")}
        metrics = evaluate_retrieval(run, {"q1": {"a"}}, ks=[1, 5])
        payload = retrieval_report_json("bm25-full", metrics)
        assert payload == {
            "system": "bm25-full",
            "map": {"1": 1.0, "5": 1.0},
            "mrr": 1.0,
            "n_queries": 1,
        }

    def test_table_renders_all_systems(self):
        run = {"q1": ranking("a")}
        metrics = evaluate_retrieval(run, {"q1": {"a"}}, ks=[1])
        text = render_retrieval_table([("bm25-full", metrics), ("dense", metrics)])
        assert "bm25-full" in text and "dense" in text and "MAP@1" in text


def test_qrels_from_corpus(minimal_corpus):
    qrels = qrels_from_corpus(minimal_corpus, "en-en")
    assert qrels == {"t1": {"a1"}, "t2": {"a1"}}
