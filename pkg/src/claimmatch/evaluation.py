"""Retrieval and matching evaluation.

Retrieval: MAP@K (average precision truncated at K, normalized by
min(|relevant|, K)) and MRR over a run of ranked lists. Matching: accuracy
and per-class F1 under stratified k-fold cross-validation. Runs and qrels
round-trip through whitespace-delimited TREC-style files; reports render as
aligned text and JSON.
"""

from __future__ import annotations

import random
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .corpus import Corpus, Pair, full_text, query_text
from .dense import cosine
from .errors import DataError, UsageError
from .mining import LabeledDataset
from .providers import EmbeddingProvider
from .ranking import RankedList

DEFAULT_KS = (1, 5, 10, 20, 50)

Qrels = dict[str, set[str]]

__all__ = [
    "DEFAULT_KS",
    "Qrels",
    "RetrievalMetrics",
    "FoldMetrics",
    "MatchReport",
    "PairScorer",
    "EmbeddingCosineScorer",
    "qrels_from_corpus",
    "reciprocal_rank",
    "average_precision_at_k",
    "evaluate_retrieval",
    "kfold_split",
    "evaluate_matcher",
    "write_run",
    "read_run",
    "write_qrels",
    "read_qrels",
    "retrieval_report_json",
    "render_retrieval_table",
    "match_report_json",
    "render_match_table",
]


def qrels_from_corpus(corpus: Corpus, partition: str) -> Qrels:
    qrels: Qrels = {}
    for pair in corpus.positives(partition):
        qrels.setdefault(pair.tweet_id, set()).add(pair.article_id)
    return qrels


def reciprocal_rank(ranking: RankedList, relevant: set[str]) -> float:
    """1/rank of the first relevant article; 0 when none is ranked."""
    for rank, article_id in enumerate(ranking.article_ids(), start=1):
        if article_id in relevant:
            return 1.0 / rank
    return 0.0


def average_precision_at_k(ranking: RankedList, relevant: set[str], k: int) -> float:
    """Average precision truncated at rank ``k``.

    Sum of precision@i over relevant ranks i <= k, divided by
    min(|relevant|, k); 0 when nothing relevant appears in the top k.
    """
    if k < 1:
        raise UsageError(f"K must be >= 1, got {k}")
    if not relevant:
        return 0.0
    hits = 0
    total = 0.0
    for rank, article_id in enumerate(ranking.article_ids()[:k], start=1):
        if article_id in relevant:
            hits += 1
            total += hits / rank
    return total / min(len(relevant), k)


@dataclass(frozen=True)
class RetrievalMetrics:
    map_at: dict[int, float]
    mrr: float
    n_queries: int


def evaluate_retrieval(
    run: Mapping[str, RankedList],
    qrels: Qrels,
    ks: Sequence[int] = DEFAULT_KS,
) -> RetrievalMetrics:
    """Mean AP@K and mean reciprocal rank over all qrels queries.

    Every run query must have a qrels entry; qrels queries missing from the
    run contribute 0 to every metric.
    """
    for query_id in run:
        if query_id not in qrels:
            raise DataError(f"run query '{query_id}' has no qrels entry")
    if not qrels:
        raise DataError("qrels are empty")
    empty = RankedList(query_id="", entries=[])
    map_at: dict[int, float] = {}
    for k in ks:
        map_at[k] = sum(
            average_precision_at_k(run.get(qid, empty), relevant, k)
            for qid, relevant in qrels.items()
        ) / len(qrels)
    mrr = sum(
        reciprocal_rank(run.get(qid, empty), relevant) for qid, relevant in qrels.items()
    ) / len(qrels)
    return RetrievalMetrics(map_at=map_at, mrr=mrr, n_queries=len(qrels))


def kfold_split(
    dataset: LabeledDataset,
    k: int = 5,
    seed: int = 0,
    group_by_article: bool = False,
) -> list[tuple[list[Pair], list[Pair]]]:
    """Stratified-by-label k-fold split into (train, test) lists.

    Test folds partition the dataset exactly and are near-equal in size per
    label. ``group_by_article`` instead keeps all pairs of an article in
    one fold (leakage-safe mode, no longer exactly stratified).
    """
    if len(dataset) < k:
        raise DataError(f"dataset of {len(dataset)} pairs is too small for {k} folds")
    counts = dataset.label_counts
    if counts["match"] == 0 or counts["not_match"] == 0:
        raise DataError("k-fold evaluation needs both labels present")
    rng = random.Random(seed)
    fold_of: dict[int, int] = {}
    if group_by_article:
        articles = sorted({p.article_id for p in dataset.pairs})
        rng.shuffle(articles)
        article_fold = {aid: i % k for i, aid in enumerate(articles)}
        for idx, pair in enumerate(dataset.pairs):
            fold_of[idx] = article_fold[pair.article_id]
    else:
        for label in ("match", "not_match"):
            indices = [i for i, p in enumerate(dataset.pairs) if p.label == label]
            rng.shuffle(indices)
            for position, idx in enumerate(indices):
                fold_of[idx] = position % k
    folds: list[tuple[list[Pair], list[Pair]]] = []
    for fold in range(k):
        train = [p for i, p in enumerate(dataset.pairs) if fold_of[i] != fold]
        test = [p for i, p in enumerate(dataset.pairs) if fold_of[i] == fold]
        folds.append((train, test))
    return folds


class PairScorer:
    """Scores (tweet text, article text) in [0, 1]; ``match`` iff the score
    reaches the threshold."""

    name: str = "scorer"
    threshold: float = 0.5

    def score(self, tweet_text: str, article_text: str) -> float:
        raise NotImplementedError

    def predict(self, tweet_text: str, article_text: str) -> str:
        return "match" if self.score(tweet_text, article_text) >= self.threshold else "not_match"


class EmbeddingCosineScorer(PairScorer):
    """Baseline scorer: embedding cosine rescaled from [-1, 1] to [0, 1]."""

    def __init__(self, provider: EmbeddingProvider, threshold: float = 0.5):
        self.provider = provider
        self.threshold = threshold
        self.name = f"cosine-{provider.name}"

    def score(self, tweet_text: str, article_text: str) -> float:
        vectors = self.provider.embed_batch([tweet_text, article_text])
        value = (cosine(vectors[0], vectors[1]) + 1.0) / 2.0
        return min(1.0, max(0.0, value))


@dataclass(frozen=True)
class FoldMetrics:
    accuracy: float
    f1_match: float
    f1_not_match: float
    n_test: int


@dataclass(frozen=True)
class MatchReport:
    partition: str
    scorer: str
    folds: list[FoldMetrics]
    mean_accuracy: float
    std_accuracy: float
    mean_f1_match: float
    std_f1_match: float
    mean_f1_not_match: float
    std_f1_not_match: float


def _f1(tp: int, fp: int, fn: int) -> float:
    denominator = 2 * tp + fp + fn
    return 2 * tp / denominator if denominator else 0.0


def _fold_metrics(pairs: list[Pair], predictions: list[str]) -> FoldMetrics:
    tp = fp = fn = tn = 0
    for pair, predicted in zip(pairs, predictions):
        if pair.label == "match":
            if predicted == "match":
                tp += 1
            else:
                fn += 1
        else:
            if predicted == "match":
                fp += 1
            else:
                tn += 1
    n = len(pairs)
    return FoldMetrics(
        accuracy=(tp + tn) / n if n else 0.0,
        f1_match=_f1(tp, fp, fn),
        f1_not_match=_f1(tn, fn, fp),
        n_test=n,
    )


def evaluate_matcher(
    scorer: PairScorer,
    dataset: LabeledDataset,
    folds: list[tuple[list[Pair], list[Pair]]],
    corpus: Corpus,
) -> MatchReport:
    """Label each test fold with the scorer and report accuracy plus
    per-class F1 (match and not_match as the positive class in turn)."""
    fold_metrics: list[FoldMetrics] = []
    for _, test in folds:
        predictions = []
        for pair in test:
            tweet = corpus.tweets[pair.tweet_id]
            article = corpus.articles[pair.article_id]
            predictions.append(
                scorer.predict(query_text(tweet), full_text(article, include_title=False))
            )
        fold_metrics.append(_fold_metrics(test, predictions))

    def mean_std(values: list[float]) -> tuple[float, float]:
        return statistics.fmean(values), statistics.pstdev(values)

    mean_acc, std_acc = mean_std([f.accuracy for f in fold_metrics])
    mean_f1p, std_f1p = mean_std([f.f1_match for f in fold_metrics])
    mean_f1n, std_f1n = mean_std([f.f1_not_match for f in fold_metrics])
    return MatchReport(
        partition=dataset.partition,
        scorer=scorer.name,
        folds=fold_metrics,
        mean_accuracy=mean_acc,
        std_accuracy=std_acc,
        mean_f1_match=mean_f1p,
        std_f1_match=std_f1p,
        mean_f1_not_match=mean_f1n,
        std_f1_not_match=std_f1n,
    )


def write_run(path: str | Path, runs: Mapping[str, RankedList], system: str) -> None:
    """TREC run format: ``query_id Q0 article_id rank score system``."""
    lines = []
    for query_id in sorted(runs):
        for rank, (article_id, score) in enumerate(runs[query_id].entries, start=1):
            lines.append(f"{query_id} Q0 {article_id} {rank} {score:.6f} {system}")
    Path(path).write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")


def read_run(path: str | Path) -> tuple[dict[str, RankedList], str]:
    rows: dict[str, list[tuple[int, str, float]]] = {}
    system = ""
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataError(f"{path}: line {line_no}: expected 6 whitespace-delimited fields")
            query_id, _, article_id, rank, score, system = parts
            try:
                rows.setdefault(query_id, []).append((int(rank), article_id, float(score)))
            except ValueError as exc:
                raise DataError(f"{path}: line {line_no}: bad rank or score: {exc}") from exc
    runs = {}
    for query_id, entries in rows.items():
        entries.sort()
        runs[query_id] = RankedList(
            query_id=query_id, entries=[(aid, score) for _, aid, score in entries]
        )
    return runs, system


def write_qrels(path: str | Path, qrels: Qrels) -> None:
    """Qrels format: ``query_id 0 article_id 1``."""
    lines = [
        f"{query_id} 0 {article_id} 1"
        for query_id in sorted(qrels)
        for article_id in sorted(qrels[query_id])
    ]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")


def read_qrels(path: str | Path) -> Qrels:
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(f"{path}: line {line_no}: expected 4 whitespace-delimited fields")
            query_id, _, article_id, relevance = parts
            if relevance not in ("0", "1"):
                raise DataError(f"{path}: line {line_no}: relevance must be 0 or 1")
            if relevance == "1":
                qrels.setdefault(query_id, set()).add(article_id)
    return qrels


def retrieval_report_json(system: str, metrics: RetrievalMetrics) -> dict:
    return {
        "system": system,
        "map": {str(k): metrics.map_at[k] for k in sorted(metrics.map_at)},
        "mrr": metrics.mrr,
        "n_queries": metrics.n_queries,
    }


def render_retrieval_table(rows: list[tuple[str, RetrievalMetrics]]) -> str:
    """Aligned-column text report, one row per system."""
    if not rows:
        return "(no systems evaluated)\n"
    ks = sorted(rows[0][1].map_at)
    header = ["system"] + [f"MAP@{k}" for k in ks] + ["MRR", "queries"]
    table = [header]
    for system, metrics in rows:
        table.append(
            [system]
            + [f"{metrics.map_at[k]:.4f}" for k in ks]
            + [f"{metrics.mrr:.4f}", str(metrics.n_queries)]
        )
    widths = [max(len(row[col]) for row in table) for col in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]
    return "\n".join(lines) + "\n"


def match_report_json(report: MatchReport) -> dict:
    return {
        "partition": report.partition,
        "scorer": report.scorer,
        "folds": [
            {
                "accuracy": f.accuracy,
                "f1_match": f.f1_match,
                "f1_not_match": f.f1_not_match,
                "n_test": f.n_test,
            }
            for f in report.folds
        ],
        "accuracy": {"mean": report.mean_accuracy, "std": report.std_accuracy},
        "f1_match": {"mean": report.mean_f1_match, "std": report.std_f1_match},
        "f1_not_match": {"mean": report.mean_f1_not_match, "std": report.std_f1_not_match},
    }


def render_match_table(reports: list[MatchReport]) -> str:
    header = ["partition", "scorer", "acc", "±", "F1+", "±", "F1-", "±", "folds"]
    table = [header]
    for r in reports:
        table.append(
            [
                r.partition,
                r.scorer,
                f"{r.mean_accuracy:.4f}",
                f"{r.std_accuracy:.4f}",
                f"{r.mean_f1_match:.4f}",
                f"{r.std_f1_match:.4f}",
                f"{r.mean_f1_not_match:.4f}",
                f"{r.std_f1_not_match:.4f}",
                str(len(r.folds)),
            ]
        )
    widths = [max(len(row[col]) for row in table) for col in range(len(header))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip() for row in table]
    return "\n".join(lines) + "\n"
