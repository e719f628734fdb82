"""Corpus data model: JSONL ingestion, validation, query building and chunking.

A corpus is a set of tweets, fact-check articles and (tweet, article) pairs,
partitioned by language pair (e.g. ``en-en``, ``hi-en``). The JSONL format is
one record per line::

    {"kind":"tweet","id":"t1","lang":"en","text":"...","link_preview":"..."}
    {"kind":"article","id":"a1","lang":"en","title":"...","body":["p1","p2"]}
    {"kind":"pair","tweet_id":"t1","article_id":"a1","label":"match"}

UTF-8 without BOM; unknown extra fields are ignored with a warning.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Callable, Iterable

from .errors import DataError
from .textproc import Token, tokenize

log = logging.getLogger(__name__)

LANGUAGES = ("en", "hi", "es", "pt")
LABELS = ("match", "not_match")
SOURCES = ("ingested", "mined_random", "mined_hard")

# Separator between body paragraphs when an article is flattened to one text.
PARAGRAPH_SEP = "\n\n"

__all__ = [
    "LANGUAGES",
    "PARAGRAPH_SEP",
    "Tweet",
    "Article",
    "Pair",
    "ParagraphChunk",
    "ChunkConfig",
    "Corpus",
    "ValidationReport",
    "CorpusError",
    "ingest_corpus",
    "load_corpus",
    "write_corpus",
    "corpus_to_jsonl",
    "query_text",
    "full_text",
    "chunk_article",
    "validate_corpus",
]


class CorpusError(DataError):
    """Raised for malformed or referentially broken corpus input."""


@dataclass(frozen=True)
class Tweet:
    id: str
    lang: str
    text: str
    link_preview: str | None = None


@dataclass(frozen=True)
class Article:
    id: str
    lang: str
    body: tuple[str, ...]
    title: str | None = None


@dataclass(frozen=True)
class Pair:
    tweet_id: str
    article_id: str
    label: str = "match"
    source: str = "ingested"
    similarity: float | None = None

    @property
    def key(self) -> tuple[str, str]:
        return (self.tweet_id, self.article_id)


@dataclass(frozen=True)
class ParagraphChunk:
    article_id: str
    chunk_index: int
    text: str
    token_count: int

    @property
    def chunk_id(self) -> str:
        return f"{self.article_id}#{self.chunk_index}"


@dataclass(frozen=True)
class ChunkConfig:
    token_limit: int = 512

    def __post_init__(self) -> None:
        if self.token_limit < 1:
            raise ValueError(f"token_limit must be >= 1, got {self.token_limit}")


@dataclass
class Corpus:
    """Immutable-by-convention container; build via :func:`ingest_corpus`."""

    tweets: dict[str, Tweet]
    articles: dict[str, Article]
    pairs: list[Pair]
    partitions: dict[str, list[Pair]] = field(default_factory=dict)

    def partition_key(self, pair: Pair) -> str:
        return f"{self.tweets[pair.tweet_id].lang}-{self.articles[pair.article_id].lang}"

    def positives(self, partition: str | None = None) -> list[Pair]:
        pairs = self.pairs if partition is None else self.partitions.get(partition, [])
        return [p for p in pairs if p.label == "match"]

    def partition_tweets(self, partition: str) -> list[Tweet]:
        """Tweets referenced by the partition's pairs (the query set)."""
        seen: dict[str, Tweet] = {}
        for pair in self.partitions.get(partition, []):
            seen.setdefault(pair.tweet_id, self.tweets[pair.tweet_id])
        return list(seen.values())

    def partition_articles(self, partition: str) -> list[Article]:
        """Articles referenced by the partition's pairs."""
        seen: dict[str, Article] = {}
        for pair in self.partitions.get(partition, []):
            seen.setdefault(pair.article_id, self.articles[pair.article_id])
        return list(seen.values())

    def tweets_with_lang(self, lang: str) -> list[Tweet]:
        return [t for t in self.tweets.values() if t.lang == lang]

    def articles_with_lang(self, lang: str) -> list[Article]:
        return [a for a in self.articles.values() if a.lang == lang]


@dataclass(frozen=True)
class ValidationReport:
    total_pairs: int
    partition_pair_counts: dict[str, int]
    orphan_tweets: list[str]
    orphan_articles: list[str]
    duplicate_pairs: list[tuple[str, str]]


def _fail(line_no: int, message: str) -> None:
    raise CorpusError(f"line {line_no}: {message}")


def _require(record: dict, line_no: int, key: str, types: type | tuple) -> object:
    if key not in record:
        _fail(line_no, f"missing required field '{key}'")
    value = record[key]
    if not isinstance(value, types):
        _fail(line_no, f"field '{key}' has wrong type {type(value).__name__}")
    return value


def _warn_extras(record: dict, line_no: int, known: frozenset[str]) -> None:
    extras = sorted(set(record) - known)
    if extras:
        log.warning("line %d: ignoring unknown fields %s", line_no, extras)


_TWEET_FIELDS = frozenset({"kind", "id", "lang", "text", "link_preview"})
_ARTICLE_FIELDS = frozenset({"kind", "id", "lang", "title", "body"})
_PAIR_FIELDS = frozenset({"kind", "tweet_id", "article_id", "label", "source", "similarity"})


def _parse_tweet(record: dict, line_no: int) -> Tweet:
    _warn_extras(record, line_no, _TWEET_FIELDS)
    tid = _require(record, line_no, "id", str)
    lang = _require(record, line_no, "lang", str)
    text = _require(record, line_no, "text", str)
    preview = record.get("link_preview")
    if not tid:
        _fail(line_no, "tweet id is empty")
    if lang not in LANGUAGES:
        _fail(line_no, f"unsupported language code '{lang}' (expected one of {list(LANGUAGES)})")
    if not text.strip():
        _fail(line_no, f"tweet '{tid}' has empty text")
    if preview is not None and not isinstance(preview, str):
        _fail(line_no, "field 'link_preview' has wrong type")
    return Tweet(id=tid, lang=lang, text=text, link_preview=preview)


def _parse_article(record: dict, line_no: int) -> Article:
    _warn_extras(record, line_no, _ARTICLE_FIELDS)
    aid = _require(record, line_no, "id", str)
    lang = _require(record, line_no, "lang", str)
    body = _require(record, line_no, "body", list)
    title = record.get("title")
    if not aid:
        _fail(line_no, "article id is empty")
    if lang not in LANGUAGES:
        _fail(line_no, f"unsupported language code '{lang}' (expected one of {list(LANGUAGES)})")
    if not all(isinstance(p, str) for p in body):
        _fail(line_no, "article body must be a list of strings")
    if not any(p.strip() for p in body):
        _fail(line_no, f"article '{aid}' has no nonempty paragraph")
    if title is not None and not isinstance(title, str):
        _fail(line_no, "field 'title' has wrong type")
    return Article(id=aid, lang=lang, body=tuple(body), title=title)


def _parse_pair(record: dict, line_no: int) -> tuple[Pair, int]:
    _warn_extras(record, line_no, _PAIR_FIELDS)
    tweet_id = _require(record, line_no, "tweet_id", str)
    article_id = _require(record, line_no, "article_id", str)
    label = _require(record, line_no, "label", str)
    source = record.get("source", "ingested")
    similarity = record.get("similarity")
    if label not in LABELS:
        _fail(line_no, f"unknown pair label '{label}'")
    if source not in SOURCES:
        _fail(line_no, f"unknown pair source '{source}'")
    if source == "ingested" and label != "match":
        _fail(line_no, "ingested pairs must carry label 'match'")
    if similarity is not None and not isinstance(similarity, (int, float)):
        _fail(line_no, "field 'similarity' has wrong type")
    pair = Pair(
        tweet_id=tweet_id,
        article_id=article_id,
        label=label,
        source=source,
        similarity=None if similarity is None else float(similarity),
    )
    return pair, line_no


def ingest_corpus(stream: BinaryIO | bytes | Iterable[bytes]) -> Corpus:
    """Read and validate a JSONL corpus from a byte stream.

    Raises :class:`CorpusError` naming the offending line for malformed
    JSON, duplicate ids, dangling pair references, unsupported record
    kinds and invariant violations.
    """
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    tweets: dict[str, Tweet] = {}
    articles: dict[str, Article] = {}
    pending_pairs: list[tuple[Pair, int]] = []

    for line_no, raw in enumerate(stream, start=1):
        if line_no == 1 and raw.startswith(b"\xef\xbb\xbf"):
            _fail(1, "UTF-8 BOM is not allowed")
        if not raw.strip():
            continue
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            _fail(line_no, f"invalid UTF-8: {exc}")
        try:
            record = json.loads(text)
        except json.JSONDecodeError as exc:
            _fail(line_no, f"malformed JSON: {exc.msg}")
        if not isinstance(record, dict):
            _fail(line_no, "record is not a JSON object")
        kind = record.get("kind")
        if kind == "tweet":
            tweet = _parse_tweet(record, line_no)
            if tweet.id in tweets:
                _fail(line_no, f"duplicate tweet id '{tweet.id}'")
            tweets[tweet.id] = tweet
        elif kind == "article":
            article = _parse_article(record, line_no)
            if article.id in articles:
                _fail(line_no, f"duplicate article id '{article.id}'")
            articles[article.id] = article
        elif kind == "pair":
            pending_pairs.append(_parse_pair(record, line_no))
        else:
            _fail(line_no, f"unsupported record kind {kind!r}")

    pairs: list[Pair] = []
    for pair, line_no in pending_pairs:
        if pair.tweet_id not in tweets:
            _fail(line_no, f"pair references unknown tweet id '{pair.tweet_id}'")
        if pair.article_id not in articles:
            _fail(line_no, f"pair references unknown article id '{pair.article_id}'")
        pairs.append(pair)

    corpus = Corpus(tweets=tweets, articles=articles, pairs=pairs)
    partitions: dict[str, list[Pair]] = {}
    for pair in pairs:
        partitions.setdefault(corpus.partition_key(pair), []).append(pair)
    corpus.partitions = partitions
    return corpus


def load_corpus(path: str | Path) -> Corpus:
    with open(path, "rb") as fh:
        return ingest_corpus(fh)


def _tweet_record(tweet: Tweet) -> dict:
    record: dict = {"kind": "tweet", "id": tweet.id, "lang": tweet.lang, "text": tweet.text}
    if tweet.link_preview is not None:
        record["link_preview"] = tweet.link_preview
    return record


def _article_record(article: Article) -> dict:
    record: dict = {"kind": "article", "id": article.id, "lang": article.lang}
    if article.title is not None:
        record["title"] = article.title
    record["body"] = list(article.body)
    return record


def pair_record(pair: Pair) -> dict:
    record: dict = {
        "kind": "pair",
        "tweet_id": pair.tweet_id,
        "article_id": pair.article_id,
        "label": pair.label,
    }
    if pair.source != "ingested":
        record["source"] = pair.source
    if pair.similarity is not None:
        record["similarity"] = pair.similarity
    return record


def corpus_to_jsonl(corpus: Corpus) -> str:
    lines = [json.dumps(_tweet_record(t), ensure_ascii=False) for t in corpus.tweets.values()]
    lines += [json.dumps(_article_record(a), ensure_ascii=False) for a in corpus.articles.values()]
    lines += [json.dumps(pair_record(p), ensure_ascii=False) for p in corpus.pairs]
    return "\n".join(lines) + "\n" if lines else ""


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    Path(path).write_text(corpus_to_jsonl(corpus), encoding="utf-8")


def query_text(tweet: Tweet) -> str:
    """Tweet text plus its link preview (if any), joined by a single space."""
    text = tweet.text.strip()
    if tweet.link_preview is None or not tweet.link_preview.strip():
        return text
    return f"{text} {tweet.link_preview.strip()}"


def full_text(article: Article, include_title: bool = True) -> str:
    """Flatten an article to a single text, title first when requested."""
    parts = [p for p in article.body if p.strip()]
    if include_title and article.title and article.title.strip():
        parts = [article.title] + parts
    return PARAGRAPH_SEP.join(parts)


# Sentence-terminal punctuation used when an over-long paragraph must be
# split: ASCII terminators plus the Devanagari danda/double danda.
_SENTENCE_TERMINALS = frozenset(".!?।॥")

Tokenizer = Callable[[str], list[Token]]


def _sentence_cuts(paragraph: str) -> list[int]:
    """Char offsets where the paragraph may be cut: after terminal
    punctuation plus the following whitespace run."""
    cuts = []
    i = 0
    n = len(paragraph)
    while i < n:
        if paragraph[i] in _SENTENCE_TERMINALS:
            j = i + 1
            while j < n and paragraph[j] in _SENTENCE_TERMINALS:
                j += 1
            had_space = False
            while j < n and paragraph[j].isspace():
                j += 1
                had_space = True
            if had_space and j < n:
                cuts.append(j)
            i = j
        else:
            i += 1
    return cuts


def _window_cuts(paragraph: str, limit: int, tokenizer: Tokenizer) -> list[int]:
    # cut at the start of every limit-th token: pieces hold exactly
    # `limit` tokens apiece (the last one possibly fewer)
    tokens = tokenizer(paragraph)
    return [tokens[i].char_span[0] for i in range(limit, len(tokens), limit)]


def _split_pieces(paragraph: str, limit: int, tokenizer: Tokenizer) -> list[str]:
    """Split one over-long paragraph into consecutive substrings, each of at
    most ``limit`` tokens. Pieces concatenate exactly to the paragraph."""
    segments: list[str] = []
    prev = 0
    for cut in _sentence_cuts(paragraph):
        segments.append(paragraph[prev:cut])
        prev = cut
    segments.append(paragraph[prev:])

    pieces: list[str] = []
    current = ""
    current_tokens = 0
    for segment in segments:
        seg_tokens = len(tokenizer(segment))
        if seg_tokens > limit:
            # fall back to fixed token windows for this sentence
            if current:
                pieces.append(current)
                current, current_tokens = "", 0
            prev = 0
            for cut in _window_cuts(segment, limit, tokenizer):
                pieces.append(segment[prev:cut])
                prev = cut
            current = segment[prev:]
            current_tokens = len(tokenizer(current))
        elif current_tokens + seg_tokens <= limit:
            current += segment
            current_tokens += seg_tokens
        else:
            pieces.append(current)
            current, current_tokens = segment, seg_tokens
    if current:
        pieces.append(current)
    return pieces


def chunk_article(
    article: Article,
    cfg: ChunkConfig = ChunkConfig(),
    tokenizer: Tokenizer = tokenize,
    include_title: bool = False,
) -> list[ParagraphChunk]:
    """Chunk an article into token-bounded paragraph pieces.

    One chunk per body paragraph; paragraphs over the token limit are split
    greedily at sentence boundaries, falling back to fixed token windows.
    Empty paragraphs are dropped; chunk indices are dense from 0. With
    ``include_title`` the title is chunked first, as paragraph 0.
    """
    paragraphs = list(article.body)
    if include_title and article.title and article.title.strip():
        paragraphs.insert(0, article.title)
    chunks: list[ParagraphChunk] = []
    for paragraph in paragraphs:
        if not paragraph.strip():
            continue
        count = len(tokenizer(paragraph))
        if count <= cfg.token_limit:
            pieces = [paragraph]
        else:
            pieces = _split_pieces(paragraph, cfg.token_limit, tokenizer)
        for piece in pieces:
            chunks.append(
                ParagraphChunk(
                    article_id=article.id,
                    chunk_index=len(chunks),
                    text=piece,
                    token_count=len(tokenizer(piece)),
                )
            )
    return chunks


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Report per-partition pair counts, orphans and duplicate pairs.

    Never mutates the corpus; never raises.
    """
    counts = {key: len(pairs) for key, pairs in sorted(corpus.partitions.items())}
    paired_tweets = {p.tweet_id for p in corpus.pairs}
    paired_articles = {p.article_id for p in corpus.pairs}
    orphan_tweets = [tid for tid in corpus.tweets if tid not in paired_tweets]
    orphan_articles = [aid for aid in corpus.articles if aid not in paired_articles]
    seen: set[tuple[str, str]] = set()
    duplicates: list[tuple[str, str]] = []
    flagged: set[tuple[str, str]] = set()
    for pair in corpus.pairs:
        if pair.key in seen and pair.key not in flagged:
            duplicates.append(pair.key)
            flagged.add(pair.key)
        seen.add(pair.key)
    return ValidationReport(
        total_pairs=len(corpus.pairs),
        partition_pair_counts=counts,
        orphan_tweets=orphan_tweets,
        orphan_articles=orphan_articles,
        duplicate_pairs=duplicates,
    )
