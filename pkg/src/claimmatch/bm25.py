"""From-scratch BM25 inverted index over articles or article paragraphs.

The scoring function follows the Lucene/Elasticsearch variant:

    idf(t)   = ln(1 + (N - df + 0.5) / (df + 0.5))
    score(d) = sum over distinct query terms t of
               idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avg_dl))

Query terms are scored once each regardless of repetition. At paragraph
granularity the index ranks paragraphs and aggregates to articles by max.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, UsageError
from .ranking import RankedList, aggregate_to_articles
from .textproc import tokenize

FULL_ARTICLE = "full_article"
PARAGRAPH = "paragraph"
GRANULARITIES = (FULL_ARTICLE, PARAGRAPH)

_MAGIC = "claimmatch-bm25"
_FORMAT_VERSION = 1

__all__ = [
    "FULL_ARTICLE",
    "PARAGRAPH",
    "Bm25Params",
    "Bm25Index",
    "RankedList",
    "build_index",
    "idf",
    "score",
    "search",
    "save_index",
    "load_index",
]


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 1.2
    b: float = 0.75

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise UsageError(f"k1 must be >= 0, got {self.k1}")
        if not 0 <= self.b <= 1:
            raise UsageError(f"b must be in [0, 1], got {self.b}")


@dataclass
class Bm25Index:
    granularity: str
    params: Bm25Params
    postings: dict[str, dict[str, int]]  # term -> unit_id -> tf
    doc_len: dict[str, int]
    unit_to_article: dict[str, str]
    avg_dl: float = field(init=False)

    def __post_init__(self) -> None:
        self.avg_dl = sum(self.doc_len.values()) / len(self.doc_len)

    @property
    def n_units(self) -> int:
        return len(self.doc_len)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def build_index(
    units: list[tuple[str, str, str]],
    params: Bm25Params = Bm25Params(),
    granularity: str = FULL_ARTICLE,
) -> Bm25Index:
    """Index ``(unit_id, article_id, text)`` units.

    Every unit counts toward avg_dl, including zero-length ones; at least
    one unit must tokenize to a nonempty sequence.
    """
    if granularity not in GRANULARITIES:
        raise UsageError(f"unknown granularity '{granularity}' (expected one of {list(GRANULARITIES)})")
    if not units:
        raise DataError("cannot build a BM25 index from an empty unit collection")
    postings: dict[str, dict[str, int]] = {}
    doc_len: dict[str, int] = {}
    unit_to_article: dict[str, str] = {}
    for unit_id, article_id, text in units:
        if unit_id in doc_len:
            raise DataError(f"duplicate unit id '{unit_id}'")
        if granularity == FULL_ARTICLE and unit_id != article_id:
            raise DataError(
                f"full_article units must map to themselves, got ('{unit_id}', '{article_id}')"
            )
        tokens = tokenize(text)
        doc_len[unit_id] = len(tokens)
        unit_to_article[unit_id] = article_id
        for token in tokens:
            postings.setdefault(token.surface, {})
            postings[token.surface][unit_id] = postings[token.surface].get(unit_id, 0) + 1
    if sum(doc_len.values()) == 0:
        raise DataError("cannot build a BM25 index: every unit tokenizes to zero tokens")
    return Bm25Index(
        granularity=granularity,
        params=params,
        postings=postings,
        doc_len=doc_len,
        unit_to_article=unit_to_article,
    )


def idf(index: Bm25Index, term: str) -> float:
    """Inverse document frequency; strictly positive, df=0 for unseen terms."""
    n = index.n_units
    df = index.df(term)
    return math.log(1 + (n - df + 0.5) / (df + 0.5))


def score(index: Bm25Index, query_tokens: list[str], unit_id: str) -> float:
    """BM25 score of one unit for a query given as raw token strings."""
    if unit_id not in index.doc_len:
        raise KeyError(f"unknown unit id '{unit_id}'")
    k1, b = index.params.k1, index.params.b
    dl = index.doc_len[unit_id]
    norm = k1 * (1 - b + b * dl / index.avg_dl)
    total = 0.0
    for term in sorted(set(query_tokens)):
        tf = index.postings.get(term, {}).get(unit_id, 0)
        if tf == 0:
            continue
        total += idf(index, term) * tf * (k1 + 1) / (tf + norm)
    return total


def search(index: Bm25Index, query_text: str, k: int, query_id: str = "") -> RankedList:
    """Top-k articles for a query; at paragraph granularity the best
    paragraph decides an article's score. Ties break by ascending id."""
    if k < 1:
        raise UsageError(f"k must be >= 1, got {k}")
    k1, b = index.params.k1, index.params.b
    unit_scores: dict[str, float] = {}
    terms = sorted({token.surface for token in tokenize(query_text)})
    for term in terms:
        unit_tfs = index.postings.get(term)
        if not unit_tfs:
            continue
        term_idf = idf(index, term)
        for unit_id, tf in unit_tfs.items():
            norm = k1 * (1 - b + b * index.doc_len[unit_id] / index.avg_dl)
            unit_scores[unit_id] = unit_scores.get(unit_id, 0.0) + term_idf * tf * (k1 + 1) / (
                tf + norm
            )
    return aggregate_to_articles(unit_scores, index.unit_to_article, k, query_id)


def save_index(index: Bm25Index, path: str | Path) -> None:
    payload = {
        "magic": _MAGIC,
        "version": _FORMAT_VERSION,
        "granularity": index.granularity,
        "k1": index.params.k1,
        "b": index.params.b,
        "doc_len": index.doc_len,
        "unit_to_article": index.unit_to_article,
        "postings": index.postings,
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, sort_keys=True), encoding="utf-8")


def load_index(path: str | Path) -> Bm25Index:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"not a BM25 index file: {path} ({exc})") from exc
    if not isinstance(payload, dict) or payload.get("magic") != _MAGIC:
        raise DataError(f"not a BM25 index file: {path}")
    if payload.get("version") != _FORMAT_VERSION:
        raise DataError(
            f"unsupported BM25 index format version {payload.get('version')!r} in {path}"
        )
    return Bm25Index(
        granularity=payload["granularity"],
        params=Bm25Params(k1=payload["k1"], b=payload["b"]),
        postings={term: dict(units) for term, units in payload["postings"].items()},
        doc_len=dict(payload["doc_len"]),
        unit_to_article=dict(payload["unit_to_article"]),
    )
