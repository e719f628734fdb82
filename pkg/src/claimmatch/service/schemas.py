"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    error: str
    kind: str = "error"


# --- provider wire protocols ------------------------------------------------


class EmbedRequest(BaseModel):
    model: str
    texts: list[str]


class EmbedResponse(BaseModel):
    dim: int
    vectors: list[list[float]]


class TranslateRequest(BaseModel):
    src: str
    dst: str
    texts: list[str]


class TranslateResponse(BaseModel):
    texts: list[str]


# --- engine endpoints ---------------------------------------------------------


class ProviderOptions(BaseModel):
    """Embedding provider selection: a remote endpoint or the built-in
    hashed embedder (when ``embed_url`` is unset)."""

    embed_url: str | None = None
    embed_model: str = "hashed-256"
    embed_dim: int = Field(default=256, ge=8)


class IngestRequest(BaseModel):
    path: str
    out_path: str | None = None


class IngestResponse(BaseModel):
    tweets: int
    articles: int
    pairs: int
    partitions: dict[str, int]
    out_path: str | None = None


class ValidateRequest(BaseModel):
    path: str


class ValidateResponse(BaseModel):
    total_pairs: int
    partition_pair_counts: dict[str, int]
    orphan_tweets: list[str]
    orphan_articles: list[str]
    duplicate_pairs: list[tuple[str, str]]


class IndexRequest(BaseModel):
    corpus_path: str
    out_path: str
    granularity: str = "article"  # article | paragraph
    partition: str | None = None
    k1: float = 1.2
    b: float = 0.75
    token_limit: int = Field(default=512, ge=1)
    include_title: bool = True


class IndexResponse(BaseModel):
    out_path: str
    granularity: str
    n_units: int
    n_terms: int


class StoreRequest(BaseModel):
    corpus_path: str
    out_path: str
    partition: str | None = None
    token_limit: int = Field(default=512, ge=1)
    include_title: bool = True
    provider: ProviderOptions = Field(default_factory=ProviderOptions)


class StoreResponse(BaseModel):
    out_path: str
    provider_name: str
    dim: int
    n_chunks: int


class SearchRequest(BaseModel):
    system: str  # bm25-full | bm25-para | dense
    query: str
    k: int = Field(default=10, ge=1)
    query_id: str = "q0"
    index_path: str | None = None  # BM25 systems
    store_path: str | None = None  # dense
    aggregate: str = "max"
    provider: ProviderOptions = Field(default_factory=ProviderOptions)


class SearchHit(BaseModel):
    rank: int
    article_id: str
    score: float


class SearchResponse(BaseModel):
    query_id: str
    system: str
    hits: list[SearchHit]


class MineRequest(BaseModel):
    corpus_path: str
    partition: str
    out_path: str | None = None
    strategy: str = "hard"
    similarity_ceiling: float = 0.7
    negatives_per_positive: int = Field(default=1, ge=1)
    seed: int = 0
    assemble_with_positives: bool = True
    provider: ProviderOptions = Field(default_factory=ProviderOptions)


class MinedPair(BaseModel):
    tweet_id: str
    article_id: str
    label: str
    source: str
    similarity: float | None = None


class MineResponse(BaseModel):
    partition: str
    n_positives: int
    n_negatives: int
    out_path: str | None = None
    negatives: list[MinedPair]


class EvalRetrievalRequest(BaseModel):
    run_path: str
    qrels_path: str
    ks: list[int] = Field(default_factory=lambda: [1, 5, 10, 20, 50])


class EvalRetrievalResponse(BaseModel):
    system: str
    map: dict[str, float]
    mrr: float
    n_queries: int


class EvalMatchRequest(BaseModel):
    corpus_path: str
    dataset_path: str
    partition: str = ""
    folds: int = Field(default=5, ge=2)
    seed: int = 0
    threshold: float = 0.5
    group_by_article: bool = False
    provider: ProviderOptions = Field(default_factory=ProviderOptions)


class FoldRow(BaseModel):
    accuracy: float
    f1_match: float
    f1_not_match: float
    n_test: int


class EvalMatchResponse(BaseModel):
    partition: str
    scorer: str
    folds: list[FoldRow]
    accuracy: dict[str, float]
    f1_match: dict[str, float]
    f1_not_match: dict[str, float]


class ExperimentRequest(BaseModel):
    config_path: str


class ExperimentResponse(BaseModel):
    output_dir: str
    results: dict
