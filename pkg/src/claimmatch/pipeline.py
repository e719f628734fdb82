"""End-to-end experiment orchestration.

From one config: build per-partition indexes and vector stores, run the
retrieval systems (full-article BM25, paragraph BM25, dense) with top-50
runs and query logs, mine negatives, and evaluate the pair scorer under
5-fold cross-validation. Re-running with the same config is byte-identical
in every emitted file: no timestamps, sorted iteration, seeded randomness.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import bm25, dense
from .corpus import (
    ChunkConfig,
    Corpus,
    chunk_article,
    full_text,
    load_corpus,
    query_text,
)
from .errors import DataError, UsageError
from .evaluation import (
    DEFAULT_KS,
    EmbeddingCosineScorer,
    MatchReport,
    PairScorer,
    RetrievalMetrics,
    evaluate_matcher,
    evaluate_retrieval,
    kfold_split,
    match_report_json,
    qrels_from_corpus,
    render_match_table,
    render_retrieval_table,
    retrieval_report_json,
    write_qrels,
    write_run,
)
from .mining import LabeledDataset, MiningConfig, assemble, mine, write_dataset
from .providers import (
    DictionaryTranslator,
    EmbeddingProvider,
    HashedEmbedder,
    HttpEmbeddingProvider,
    HttpTranslationProvider,
    TranslationProvider,
)
from .ranking import RankedList

SYSTEMS = ("bm25-full", "bm25-para", "dense")
TASKS = ("retrieval", "matching")
CV_FOLDS = 5

__all__ = [
    "SYSTEMS",
    "ExperimentConfig",
    "load_config",
    "bm25_units",
    "run_retrieval_experiment",
    "run_matching_experiment",
    "run_experiment",
]


@dataclass
class ExperimentConfig:
    corpus_path: str
    output_dir: str
    partitions: list[str] | None = None  # None = every partition in the corpus
    systems: list[str] = field(default_factory=lambda: list(SYSTEMS))
    tasks: list[str] = field(default_factory=lambda: list(TASKS))
    ks: list[int] = field(default_factory=lambda: list(DEFAULT_KS))
    top_k: int = 50
    seed: int = 0
    bm25_params: bm25.Bm25Params = field(default_factory=bm25.Bm25Params)
    chunking: ChunkConfig = field(default_factory=ChunkConfig)
    mining: MiningConfig = field(default_factory=MiningConfig)
    include_title: bool = True
    aggregate: str = "max"
    scorer_threshold: float = 0.5
    embed_url: str | None = None  # unset: built-in hashed embedder
    embed_model: str = "hashed-256"
    embed_dim: int = 256
    translate_url: str | None = None  # unset: built-in dictionary translator
    translation_table: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.systems:
            raise UsageError("experiment needs at least one retrieval system")
        for system in self.systems:
            if system not in SYSTEMS:
                raise UsageError(f"unknown system '{system}' (expected one of {list(SYSTEMS)})")
        for task in self.tasks:
            if task not in TASKS:
                raise UsageError(f"unknown task '{task}' (expected one of {list(TASKS)})")
        if sorted(self.ks) != list(self.ks) or len(set(self.ks)) != len(self.ks):
            raise UsageError("ks must be strictly ascending")
        if self.top_k < max(self.ks, default=1):
            raise UsageError(f"top_k {self.top_k} is smaller than the largest K {max(self.ks)}")


_CONFIG_KEYS = {
    "corpus_path",
    "output_dir",
    "partitions",
    "systems",
    "tasks",
    "ks",
    "top_k",
    "seed",
    "k1",
    "b",
    "token_limit",
    "mining_strategy",
    "similarity_ceiling",
    "negatives_per_positive",
    "include_title",
    "aggregate",
    "scorer_threshold",
    "embed_url",
    "embed_model",
    "embed_dim",
    "translate_url",
    "translation_table",
}


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an experiment config from a flat JSON document.

    Provider endpoints fall back to the EMBED_URL / TRANSLATE_URL
    environment variables when not present in the file.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise UsageError(f"config {path} must be a JSON object")
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    if unknown:
        raise UsageError(f"config {path} has unknown keys: {unknown}")
    for key in ("corpus_path", "output_dir"):
        if key not in raw:
            raise UsageError(f"config {path} is missing required key '{key}'")
    table = raw.get("translation_table", {})
    if isinstance(table, str):
        table = json.loads(Path(table).read_text(encoding="utf-8"))
    return ExperimentConfig(
        corpus_path=raw["corpus_path"],
        output_dir=raw["output_dir"],
        partitions=raw.get("partitions"),
        systems=list(raw.get("systems", SYSTEMS)),
        tasks=list(raw.get("tasks", TASKS)),
        ks=list(raw.get("ks", DEFAULT_KS)),
        top_k=raw.get("top_k", 50),
        seed=raw.get("seed", 0),
        bm25_params=bm25.Bm25Params(k1=raw.get("k1", 1.2), b=raw.get("b", 0.75)),
        chunking=ChunkConfig(token_limit=raw.get("token_limit", 512)),
        mining=MiningConfig(
            strategy=raw.get("mining_strategy", "hard"),
            similarity_ceiling=raw.get("similarity_ceiling", 0.7),
            negatives_per_positive=raw.get("negatives_per_positive", 1),
            seed=raw.get("seed", 0),
        ),
        include_title=raw.get("include_title", True),
        aggregate=raw.get("aggregate", "max"),
        scorer_threshold=raw.get("scorer_threshold", 0.5),
        embed_url=raw.get("embed_url", os.environ.get("EMBED_URL") or None),
        embed_model=raw.get("embed_model", "hashed-256"),
        embed_dim=raw.get("embed_dim", 256),
        translate_url=raw.get("translate_url", os.environ.get("TRANSLATE_URL") or None),
        translation_table=dict(table),
    )


def make_embedding_provider(cfg: ExperimentConfig) -> EmbeddingProvider:
    if cfg.embed_url:
        return HttpEmbeddingProvider(cfg.embed_url, model=cfg.embed_model)
    return HashedEmbedder(dim=cfg.embed_dim)


def make_translation_provider(cfg: ExperimentConfig) -> TranslationProvider:
    if cfg.translate_url:
        return HttpTranslationProvider(cfg.translate_url)
    pairs = [(src, dst) for src in ("en", "hi", "es", "pt") for dst in ("en", "hi", "es", "pt")]
    return DictionaryTranslator(cfg.translation_table, pairs=pairs)


def _partitions_to_run(corpus: Corpus, cfg: ExperimentConfig) -> list[str]:
    available = sorted(corpus.partitions)
    if cfg.partitions is None:
        if not available:
            raise DataError("corpus has no pairs, nothing to evaluate")
        return available
    for partition in cfg.partitions:
        if partition not in corpus.partitions:
            raise DataError(f"corpus has no partition '{partition}' (available: {available})")
    return list(cfg.partitions)


def bm25_units(
    articles: list, granularity: str, chunking: ChunkConfig, include_title: bool
) -> list[tuple[str, str, str]]:
    if granularity == bm25.FULL_ARTICLE:
        return [(a.id, a.id, full_text(a, include_title=include_title)) for a in articles]
    units = []
    for article in articles:
        for chunk in chunk_article(article, chunking, include_title=include_title):
            units.append((chunk.chunk_id, chunk.article_id, chunk.text))
    return units


def _prepare_queries(
    tweets: list,
    system: str,
    partition: str,
    translator: TranslationProvider | None,
) -> list[tuple[str, str]]:
    """(query_id, final query text); BM25 queries are translated on
    cross-lingual partitions, dense queries never are."""
    queries = [(t.id, query_text(t)) for t in sorted(tweets, key=lambda t: t.id)]
    tweet_lang, article_lang = partition.split("-", maxsplit=1)
    if system == "dense" or tweet_lang == article_lang:
        return queries
    unusable = translator is None or (
        isinstance(translator, DictionaryTranslator) and not translator.table
    )
    if unusable:
        raise UsageError(
            f"partition '{partition}' needs a translation provider for BM25 systems; "
            "set TRANSLATE_URL or provide a translation_table"
        )
    texts = translator.translate_batch([q for _, q in queries], tweet_lang, article_lang)
    return [(qid, text) for (qid, _), text in zip(queries, texts)]


def _write_query_log(path: Path, queries: list[tuple[str, str]]) -> None:
    lines = [f"{qid}\t{text}" for qid, text in queries]
    path.write_text("\n".join(lines) + "\n" if lines else "", encoding="utf-8")


def _json_dump(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def run_retrieval_experiment(
    cfg: ExperimentConfig,
    embedder: EmbeddingProvider | None = None,
    translator: TranslationProvider | None = None,
) -> dict:
    """Run every configured (partition, system) retrieval pass.

    Writes per-pass run files and query logs, per-partition qrels, and a
    consolidated report (JSON + aligned text). Returns the report dict.
    """
    corpus = load_corpus(cfg.corpus_path)
    partitions = _partitions_to_run(corpus, cfg)
    out = Path(cfg.output_dir)
    (out / "runs").mkdir(parents=True, exist_ok=True)
    (out / "queries").mkdir(parents=True, exist_ok=True)
    embedder = embedder or (make_embedding_provider(cfg) if "dense" in cfg.systems else None)
    translator = translator or make_translation_provider(cfg)

    report: dict[str, dict[str, RetrievalMetrics]] = {}
    for partition in partitions:
        tweets = corpus.partition_tweets(partition)
        articles = corpus.partition_articles(partition)
        if not tweets:
            raise DataError(f"partition '{partition}' has no tweets")
        qrels = qrels_from_corpus(corpus, partition)
        write_qrels(out / "runs" / f"{partition}.qrels", qrels)
        report[partition] = {}

        store = None
        for system in cfg.systems:
            queries = _prepare_queries(tweets, system, partition, translator)
            _write_query_log(out / "queries" / f"{partition}.{system}.tsv", queries)
            runs: dict[str, RankedList] = {}
            if system == "dense":
                if store is None:
                    chunks = []
                    for article in sorted(articles, key=lambda a: a.id):
                        chunks.extend(
                            chunk_article(article, cfg.chunking, include_title=cfg.include_title)
                        )
                    store = dense.build_store(embedder, chunks)
                for qid, text in queries:
                    runs[qid] = dense.search(
                        store, embedder, text, cfg.top_k, query_id=qid, aggregate=cfg.aggregate
                    )
            else:
                granularity = bm25.FULL_ARTICLE if system == "bm25-full" else bm25.PARAGRAPH
                units = bm25_units(articles, granularity, cfg.chunking, cfg.include_title)
                index = bm25.build_index(units, cfg.bm25_params, granularity)
                for qid, text in queries:
                    runs[qid] = bm25.search(index, text, cfg.top_k, query_id=qid)
            write_run(out / "runs" / f"{partition}.{system}.run", runs, system)
            report[partition][system] = evaluate_retrieval(runs, qrels, cfg.ks)

    payload = {
        "task": "retrieval",
        "ks": list(cfg.ks),
        "partitions": {
            partition: {
                system: retrieval_report_json(system, metrics)
                for system, metrics in sorted(systems.items())
            }
            for partition, systems in sorted(report.items())
        },
    }
    _json_dump(payload, out / "retrieval_report.json")
    text = ""
    for partition in sorted(report):
        rows = sorted(report[partition].items())
        text += f"partition {partition}\n" + render_retrieval_table(rows) + "\n"
    (out / "retrieval_report.txt").write_text(text, encoding="utf-8")
    return payload


def run_matching_experiment(
    cfg: ExperimentConfig,
    scorer: PairScorer | None = None,
    embedder: EmbeddingProvider | None = None,
) -> dict:
    """Mine negatives, assemble labeled datasets (per partition plus the
    pooled "altogether" set), cross-validate the scorer, emit reports."""
    corpus = load_corpus(cfg.corpus_path)
    partitions = _partitions_to_run(corpus, cfg)
    out = Path(cfg.output_dir)
    (out / "datasets").mkdir(parents=True, exist_ok=True)
    embedder = embedder or make_embedding_provider(cfg)
    scorer = scorer or EmbeddingCosineScorer(embedder, threshold=cfg.scorer_threshold)

    reports: list[MatchReport] = []
    pooled_pairs = []
    for partition in partitions:
        positives = corpus.positives(partition)
        negatives = mine(corpus, cfg.mining, partition, embedder)
        dataset = assemble(positives, negatives, cfg.seed, partition)
        write_dataset(dataset, out / "datasets" / f"{partition}.jsonl")
        pooled_pairs.extend(dataset.pairs)
        folds = kfold_split(dataset, k=CV_FOLDS, seed=cfg.seed)
        reports.append(evaluate_matcher(scorer, dataset, folds, corpus))
    if len(partitions) > 1:
        pooled = LabeledDataset(pairs=pooled_pairs, partition="altogether")
        write_dataset(pooled, out / "datasets" / "altogether.jsonl")
        folds = kfold_split(pooled, k=CV_FOLDS, seed=cfg.seed)
        reports.append(evaluate_matcher(scorer, pooled, folds, corpus))

    payload = {
        "task": "matching",
        "folds": CV_FOLDS,
        "reports": [match_report_json(r) for r in reports],
    }
    _json_dump(payload, out / "match_report.json")
    (out / "match_report.txt").write_text(render_match_table(reports), encoding="utf-8")
    return payload


def run_experiment(
    cfg: ExperimentConfig,
    scorer: PairScorer | None = None,
    embedder: EmbeddingProvider | None = None,
    translator: TranslationProvider | None = None,
) -> dict:
    """Run the configured tasks; returns {"retrieval": ..., "matching": ...}."""
    results: dict = {}
    if "retrieval" in cfg.tasks:
        results["retrieval"] = run_retrieval_experiment(cfg, embedder=embedder, translator=translator)
    if "matching" in cfg.tasks:
        results["matching"] = run_matching_experiment(cfg, scorer=scorer, embedder=embedder)
    return results
