"""FastAPI service wrapping the claim-matching engine.

Endpoints mirror the CLI verbs (ingest, validate, index, store, search,
mine, eval, experiment) and also serve the provider wire protocols
(``/v1/embed``, ``/v1/translate``) backed by the built-in deterministic
providers, so the service doubles as a reference provider for clients.

Artifacts (indexes, stores, runs, reports) are read and written on the
service's filesystem; requests carry paths plus options, responses carry
summaries and small payloads.
"""

from __future__ import annotations

import os
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from .. import bm25, dense
from ..corpus import (
    ChunkConfig,
    chunk_article,
    ingest_corpus,
    load_corpus,
    validate_corpus,
    write_corpus,
)
from ..errors import ClaimMatchError, DataError, UnsupportedPairError, UsageError
from ..evaluation import (
    EmbeddingCosineScorer,
    evaluate_matcher,
    evaluate_retrieval,
    kfold_split,
    match_report_json,
    read_qrels,
    read_run,
)
from ..mining import LabeledDataset, MiningConfig, assemble, load_dataset, mine, write_dataset
from ..pipeline import bm25_units, load_config, run_experiment
from ..providers import (
    DictionaryTranslator,
    EmbeddingProvider,
    HashedEmbedder,
    HttpEmbeddingProvider,
)
from . import schemas

_STATUS_BY_KIND = {"usage": 400, "data": 422, "provider": 502}

_GRANULARITY = {"article": bm25.FULL_ARTICLE, "paragraph": bm25.PARAGRAPH}

ALL_LANG_PAIRS = [(s, d) for s in ("en", "hi", "es", "pt") for d in ("en", "hi", "es", "pt")]


def _resolve_embedder(app: FastAPI, opts: schemas.ProviderOptions) -> EmbeddingProvider:
    if opts.embed_url:
        return HttpEmbeddingProvider(opts.embed_url, model=opts.embed_model)
    return _builtin_embedder(app, opts.embed_dim)


def _builtin_embedder(app: FastAPI, dim: int) -> HashedEmbedder:
    cache: dict[int, HashedEmbedder] = app.state.embedders
    if dim not in cache:
        cache[dim] = HashedEmbedder(dim=dim)
    return cache[dim]


def _cached_artifact(app: FastAPI, path: str, loader):
    """Load-and-cache an index or store keyed by path + stat signature."""
    try:
        stat = os.stat(path)
    except OSError as exc:
        raise DataError(f"cannot read '{path}': {exc}") from exc
    signature = (stat.st_mtime_ns, stat.st_size)
    cached = app.state.artifacts.get(path)
    if cached and cached[0] == signature:
        return cached[1]
    artifact = loader(path)
    app.state.artifacts[path] = (signature, artifact)
    return artifact


def create_app(
    translation_table: dict[str, str] | None = None,
    translation_pairs: list[tuple[str, str]] | None = None,
) -> FastAPI:
    app = FastAPI(title="claimmatch", version="0.1.0")
    app.state.embedders = {}
    app.state.artifacts = {}
    app.state.translator = DictionaryTranslator(
        translation_table or {},
        pairs=translation_pairs if translation_pairs is not None else ALL_LANG_PAIRS,
    )

    @app.exception_handler(ClaimMatchError)
    async def handle_domain_error(_: Request, exc: ClaimMatchError) -> JSONResponse:
        status = 400 if isinstance(exc, UnsupportedPairError) else _STATUS_BY_KIND.get(exc.kind, 500)
        return JSONResponse(status_code=status, content={"error": str(exc), "kind": exc.kind})

    @app.exception_handler(RequestValidationError)
    async def handle_validation_error(_: Request, exc: RequestValidationError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"error": str(exc), "kind": "usage"})

    @app.get("/v1/health")
    def health() -> dict:
        return {"status": "ok"}

    # --- provider wire protocols ---------------------------------------

    @app.post("/v1/embed", response_model=schemas.EmbedResponse)
    def embed(request: schemas.EmbedRequest) -> schemas.EmbedResponse:
        model = request.model
        if model.startswith("hashed-"):
            try:
                dim = int(model.removeprefix("hashed-"))
            except ValueError:
                raise UsageError(f"unknown embedding model '{model}'")
            provider = _builtin_embedder(app, dim)
        else:
            raise UsageError(f"unknown embedding model '{model}'")
        vectors = provider.embed_batch(request.texts)
        return schemas.EmbedResponse(dim=provider.dim, vectors=vectors.tolist())

    @app.post("/v1/translate", response_model=schemas.TranslateResponse)
    def translate(request: schemas.TranslateRequest) -> schemas.TranslateResponse:
        texts = app.state.translator.translate_batch(request.texts, request.src, request.dst)
        return schemas.TranslateResponse(texts=texts)

    # --- corpus ---------------------------------------------------------

    @app.post("/v1/corpus/ingest", response_model=schemas.IngestResponse)
    def ingest(request: schemas.IngestRequest) -> schemas.IngestResponse:
        corpus = load_corpus(_existing(request.path))
        if request.out_path:
            write_corpus(corpus, request.out_path)
        return schemas.IngestResponse(
            tweets=len(corpus.tweets),
            articles=len(corpus.articles),
            pairs=len(corpus.pairs),
            partitions={key: len(pairs) for key, pairs in sorted(corpus.partitions.items())},
            out_path=request.out_path,
        )

    @app.post("/v1/corpus/validate", response_model=schemas.ValidateResponse)
    def validate(request: schemas.ValidateRequest) -> schemas.ValidateResponse:
        report = validate_corpus(load_corpus(_existing(request.path)))
        return schemas.ValidateResponse(
            total_pairs=report.total_pairs,
            partition_pair_counts=report.partition_pair_counts,
            orphan_tweets=report.orphan_tweets,
            orphan_articles=report.orphan_articles,
            duplicate_pairs=report.duplicate_pairs,
        )

    # --- index and store building ---------------------------------------

    @app.post("/v1/index/build", response_model=schemas.IndexResponse)
    def build_index(request: schemas.IndexRequest) -> schemas.IndexResponse:
        if request.granularity not in _GRANULARITY:
            raise UsageError(
                f"granularity must be one of {sorted(_GRANULARITY)}, got '{request.granularity}'"
            )
        corpus = load_corpus(_existing(request.corpus_path))
        articles = _articles_for(corpus, request.partition)
        granularity = _GRANULARITY[request.granularity]
        units = bm25_units(
            articles, granularity, ChunkConfig(token_limit=request.token_limit), request.include_title
        )
        index = bm25.build_index(units, bm25.Bm25Params(k1=request.k1, b=request.b), granularity)
        bm25.save_index(index, request.out_path)
        return schemas.IndexResponse(
            out_path=request.out_path,
            granularity=request.granularity,
            n_units=index.n_units,
            n_terms=len(index.postings),
        )

    @app.post("/v1/store/build", response_model=schemas.StoreResponse)
    def build_store(request: schemas.StoreRequest) -> schemas.StoreResponse:
        corpus = load_corpus(_existing(request.corpus_path))
        articles = _articles_for(corpus, request.partition)
        cfg = ChunkConfig(token_limit=request.token_limit)
        chunks = []
        for article in sorted(articles, key=lambda a: a.id):
            chunks.extend(chunk_article(article, cfg, include_title=request.include_title))
        provider = _resolve_embedder(app, request.provider)
        store = dense.build_store(provider, chunks)
        dense.save_store(store, request.out_path)
        return schemas.StoreResponse(
            out_path=request.out_path,
            provider_name=store.provider_name,
            dim=store.dim,
            n_chunks=len(store.chunk_ids),
        )

    # --- search -----------------------------------------------------------

    @app.post("/v1/search", response_model=schemas.SearchResponse)
    def search(request: schemas.SearchRequest) -> schemas.SearchResponse:
        if request.system in ("bm25-full", "bm25-para"):
            if not request.index_path:
                raise UsageError(f"system '{request.system}' needs index_path")
            index = _cached_artifact(app, request.index_path, bm25.load_index)
            wanted = bm25.FULL_ARTICLE if request.system == "bm25-full" else bm25.PARAGRAPH
            if index.granularity != wanted:
                raise UsageError(
                    f"system '{request.system}' needs a {wanted} index, "
                    f"but '{request.index_path}' was built at {index.granularity} granularity"
                )
            ranking = bm25.search(index, request.query, request.k, query_id=request.query_id)
        elif request.system == "dense":
            if not request.store_path:
                raise UsageError("system 'dense' needs store_path")
            store = _cached_artifact(app, request.store_path, dense.load_store)
            provider = _resolve_embedder(app, request.provider)
            ranking = dense.search(
                store,
                provider,
                request.query,
                request.k,
                query_id=request.query_id,
                aggregate=request.aggregate,
            )
        else:
            raise UsageError(f"unknown system '{request.system}'")
        hits = [
            schemas.SearchHit(rank=rank, article_id=aid, score=score)
            for rank, (aid, score) in enumerate(ranking.entries, start=1)
        ]
        return schemas.SearchResponse(query_id=request.query_id, system=request.system, hits=hits)

    # --- mining -----------------------------------------------------------

    @app.post("/v1/mine", response_model=schemas.MineResponse)
    def mine_endpoint(request: schemas.MineRequest) -> schemas.MineResponse:
        corpus = load_corpus(_existing(request.corpus_path))
        cfg = MiningConfig(
            strategy=request.strategy,
            similarity_ceiling=request.similarity_ceiling,
            negatives_per_positive=request.negatives_per_positive,
            seed=request.seed,
        )
        provider = _resolve_embedder(app, request.provider) if request.strategy == "hard" else None
        negatives = mine(corpus, cfg, request.partition, provider)
        positives = corpus.positives(request.partition)
        if request.out_path:
            if request.assemble_with_positives:
                dataset = assemble(positives, negatives, request.seed, request.partition)
            else:
                dataset = LabeledDataset(pairs=negatives, partition=request.partition)
            write_dataset(dataset, request.out_path)
        return schemas.MineResponse(
            partition=request.partition,
            n_positives=len(positives),
            n_negatives=len(negatives),
            out_path=request.out_path,
            negatives=[
                schemas.MinedPair(
                    tweet_id=p.tweet_id,
                    article_id=p.article_id,
                    label=p.label,
                    source=p.source,
                    similarity=p.similarity,
                )
                for p in negatives
            ],
        )

    # --- evaluation --------------------------------------------------------

    @app.post("/v1/eval/retrieval", response_model=schemas.EvalRetrievalResponse)
    def eval_retrieval(request: schemas.EvalRetrievalRequest) -> schemas.EvalRetrievalResponse:
        runs, system = read_run(_existing(request.run_path))
        qrels = read_qrels(_existing(request.qrels_path))
        metrics = evaluate_retrieval(runs, qrels, request.ks)
        return schemas.EvalRetrievalResponse(
            system=system or "unknown",
            map={str(k): v for k, v in sorted(metrics.map_at.items())},
            mrr=metrics.mrr,
            n_queries=metrics.n_queries,
        )

    @app.post("/v1/eval/match", response_model=schemas.EvalMatchResponse)
    def eval_match(request: schemas.EvalMatchRequest) -> schemas.EvalMatchResponse:
        corpus = load_corpus(_existing(request.corpus_path))
        dataset = load_dataset(_existing(request.dataset_path), corpus, request.partition)
        folds = kfold_split(
            dataset, k=request.folds, seed=request.seed, group_by_article=request.group_by_article
        )
        provider = _resolve_embedder(app, request.provider)
        scorer = EmbeddingCosineScorer(provider, threshold=request.threshold)
        report = evaluate_matcher(scorer, dataset, folds, corpus)
        payload = match_report_json(report)
        return schemas.EvalMatchResponse(
            partition=report.partition,
            scorer=report.scorer,
            folds=[schemas.FoldRow(**row) for row in payload["folds"]],
            accuracy=payload["accuracy"],
            f1_match=payload["f1_match"],
            f1_not_match=payload["f1_not_match"],
        )

    # --- experiments ---------------------------------------------------------

    @app.post("/v1/experiment", response_model=schemas.ExperimentResponse)
    def experiment(request: schemas.ExperimentRequest) -> schemas.ExperimentResponse:
        cfg = load_config(_existing(request.config_path))
        results = run_experiment(cfg)
        return schemas.ExperimentResponse(output_dir=cfg.output_dir, results=results)

    return app


def _existing(path: str) -> str:
    if not Path(path).exists():
        raise DataError(f"no such file: {path}")
    return path


def _articles_for(corpus, partition: str | None):
    if partition is None:
        articles = list(corpus.articles.values())
        if not articles:
            raise DataError("corpus has no articles")
        return articles
    if partition not in corpus.partitions:
        raise DataError(
            f"corpus has no partition '{partition}' (available: {sorted(corpus.partitions)})"
        )
    return corpus.partition_articles(partition)


app = create_app()
