"""Negative pair mining and labeled dataset assembly.

Random negatives pair non-matching tweets and articles uniformly inside a
language partition. Hard negatives rank all non-matching pairs by cosine
similarity (descending), drop pairs at or above the similarity ceiling to
limit false negatives, and keep the top of what remains. Both strategies
are seeded and bit-reproducible.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, Pair, full_text, pair_record, query_text
from .dense import pairwise_similarities
from .errors import DataError, UsageError
from .providers import EmbeddingProvider

log = logging.getLogger(__name__)

STRATEGIES = ("random", "hard")

__all__ = [
    "MiningConfig",
    "LabeledDataset",
    "mine_random",
    "mine_hard",
    "mine",
    "assemble",
    "write_dataset",
    "load_dataset",
]


@dataclass(frozen=True)
class MiningConfig:
    strategy: str = "hard"
    similarity_ceiling: float = 0.7
    negatives_per_positive: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise UsageError(f"unknown mining strategy '{self.strategy}'")
        if not 0 < self.similarity_ceiling <= 1:
            raise UsageError(
                f"similarity_ceiling must be in (0, 1], got {self.similarity_ceiling}"
            )
        if self.negatives_per_positive < 1:
            raise UsageError(
                f"negatives_per_positive must be >= 1, got {self.negatives_per_positive}"
            )


@dataclass
class LabeledDataset:
    pairs: list[Pair]
    partition: str

    @property
    def label_counts(self) -> dict[str, int]:
        counts = {"match": 0, "not_match": 0}
        for pair in self.pairs:
            counts[pair.label] += 1
        return counts

    def __len__(self) -> int:
        return len(self.pairs)


def _partition_pools(corpus: Corpus, partition: str) -> tuple[list, list]:
    """All tweets and articles of the partition's language pair.

    Mining considers every same-setting combination, not just the entities
    that already appear in pairs, so orphan articles are candidates too.
    """
    if partition not in corpus.partitions:
        raise DataError(f"corpus has no partition '{partition}'")
    tweet_lang, article_lang = partition.split("-", maxsplit=1)
    tweets = sorted(corpus.tweets_with_lang(tweet_lang), key=lambda t: t.id)
    articles = sorted(corpus.articles_with_lang(article_lang), key=lambda a: a.id)
    return tweets, articles


def _candidate_keys(corpus: Corpus, partition: str) -> tuple[list[tuple[str, str]], set[tuple[str, str]], int]:
    """Non-matching (tweet_id, article_id) keys of a partition, sorted."""
    tweets, articles = _partition_pools(corpus, partition)
    positive_keys = {p.key for p in corpus.positives(partition)}
    candidates = [
        (t.id, a.id) for t in tweets for a in articles if (t.id, a.id) not in positive_keys
    ]
    if not candidates:
        raise DataError(
            f"partition '{partition}' is too small to mine negatives: "
            "every tweet-article combination is already a positive pair"
        )
    return candidates, positive_keys, len(positive_keys)


def mine_random(corpus: Corpus, cfg: MiningConfig, partition: str) -> list[Pair]:
    """Seeded uniform sample of non-matching pairs within a partition."""
    candidates, _, n_positives = _candidate_keys(corpus, partition)
    wanted = min(cfg.negatives_per_positive * n_positives, len(candidates))
    rng = random.Random(cfg.seed)
    chosen = rng.sample(candidates, wanted)
    return [
        Pair(tweet_id=tid, article_id=aid, label="not_match", source="mined_random")
        for tid, aid in chosen
    ]


def mine_hard(
    corpus: Corpus,
    provider: EmbeddingProvider,
    cfg: MiningConfig,
    partition: str,
) -> list[Pair]:
    """Similarity-ranked negatives: non-matching pairs below the ceiling,
    most similar first, ties broken by (tweet_id, article_id)."""
    _, positive_keys, n_positives = _candidate_keys(corpus, partition)
    tweets, articles = _partition_pools(corpus, partition)
    sims = pairwise_similarities(
        [query_text(t) for t in tweets],
        [full_text(a, include_title=False) for a in articles],
        provider,
    )
    scored: list[tuple[float, str, str]] = []
    for i, tweet in enumerate(tweets):
        for j, article in enumerate(articles):
            if (tweet.id, article.id) in positive_keys:
                continue
            similarity = float(sims[i, j])
            if similarity >= cfg.similarity_ceiling:
                continue
            scored.append((similarity, tweet.id, article.id))
    if not scored:
        log.warning(
            "partition '%s': every candidate similarity is at or above the ceiling %.3f; "
            "no hard negatives mined",
            partition,
            cfg.similarity_ceiling,
        )
        return []
    scored.sort(key=lambda item: (-item[0], item[1], item[2]))
    wanted = min(cfg.negatives_per_positive * n_positives, len(scored))
    return [
        Pair(
            tweet_id=tid,
            article_id=aid,
            label="not_match",
            source="mined_hard",
            similarity=similarity,
        )
        for similarity, tid, aid in scored[:wanted]
    ]


def mine(
    corpus: Corpus,
    cfg: MiningConfig,
    partition: str,
    provider: EmbeddingProvider | None = None,
) -> list[Pair]:
    if cfg.strategy == "random":
        return mine_random(corpus, cfg, partition)
    if provider is None:
        raise UsageError("hard mining requires an embedding provider")
    return mine_hard(corpus, provider, cfg, partition)


def assemble(
    positives: list[Pair],
    negatives: list[Pair],
    seed: int,
    partition: str,
) -> LabeledDataset:
    """Merge and seeded-shuffle positives with mined negatives."""
    seen: set[tuple[str, str]] = set()
    for pair in positives + negatives:
        if pair.key in seen:
            raise DataError(
                f"pair ({pair.tweet_id}, {pair.article_id}) appears more than once "
                "across positives and negatives"
            )
        seen.add(pair.key)
    merged = list(positives) + list(negatives)
    random.Random(seed).shuffle(merged)
    dataset = LabeledDataset(pairs=merged, partition=partition)
    log.info(
        "assembled dataset for partition '%s': %s",
        partition,
        dataset.label_counts,
    )
    return dataset


def write_dataset(dataset: LabeledDataset, path: str | Path) -> None:
    lines = [json.dumps(pair_record(p), ensure_ascii=False) for p in dataset.pairs]
    Path(path).write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")


def load_dataset(path: str | Path, corpus: Corpus, partition: str = "") -> LabeledDataset:
    """Read a pair-record JSONL back as a labeled dataset, checking that
    every reference resolves in ``corpus``."""
    pairs: list[Pair] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: line {line_no}: malformed JSON: {exc.msg}") from exc
            if record.get("kind") != "pair":
                raise DataError(f"{path}: line {line_no}: expected a pair record")
            pair = Pair(
                tweet_id=record["tweet_id"],
                article_id=record["article_id"],
                label=record.get("label", "match"),
                source=record.get("source", "ingested"),
                similarity=record.get("similarity"),
            )
            if pair.tweet_id not in corpus.tweets:
                raise DataError(f"{path}: line {line_no}: unknown tweet id '{pair.tweet_id}'")
            if pair.article_id not in corpus.articles:
                raise DataError(f"{path}: line {line_no}: unknown article id '{pair.article_id}'")
            pairs.append(pair)
    return LabeledDataset(pairs=pairs, partition=partition)
