"""Embedding-based retrieval over paragraph chunks.

Chunks are embedded once into an L2-normalized matrix; queries are scored
against every chunk by cosine (exact brute force, no ANN) and chunk scores
fold into article rankings, best chunk first by default.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import ParagraphChunk
from .errors import DataError, ProviderError, UsageError
from .providers import EmbeddingProvider
from .ranking import RankedList, aggregate_to_articles

_MAGIC = b"CMVSTOR1"
_FORMAT_VERSION = 1

__all__ = [
    "VectorStore",
    "cosine",
    "build_store",
    "search",
    "pairwise_similarities",
    "save_store",
    "load_store",
]


def cosine(u: Sequence[float] | np.ndarray, v: Sequence[float] | np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; zero if either vector has zero norm."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError(f"cosine dimension mismatch: {a.shape} vs {b.shape}")
    norm_a = float(np.linalg.norm(a))
    norm_b = float(np.linalg.norm(b))
    if norm_a == 0.0 or norm_b == 0.0:
        return 0.0
    return float(np.dot(a, b) / (norm_a * norm_b))


def _normalize_rows(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms == 0.0, 1.0, norms)
    return matrix / safe


@dataclass
class VectorStore:
    provider_name: str
    dim: int
    chunk_ids: list[str]
    article_ids: list[str]  # parallel to chunk_ids
    vectors: np.ndarray  # (n_chunks, dim), rows L2-normalized or zero

    def __post_init__(self) -> None:
        if self.vectors.shape != (len(self.chunk_ids), self.dim):
            raise DataError(
                f"vector matrix shape {self.vectors.shape} does not match "
                f"{len(self.chunk_ids)} chunks x dim {self.dim}"
            )
        if len(self.article_ids) != len(self.chunk_ids):
            raise DataError("chunk_ids and article_ids must be parallel")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("vector store rows must be finite")

    @property
    def chunk_to_article(self) -> dict[str, str]:
        return dict(zip(self.chunk_ids, self.article_ids))


def build_store(
    provider: EmbeddingProvider,
    chunks: Sequence[ParagraphChunk],
    batch_size: int = 64,
) -> VectorStore:
    """Embed chunks in order and assemble the normalized store."""
    if not chunks:
        raise DataError("cannot build a vector store from zero chunks")
    rows: list[np.ndarray] = []
    for start in range(0, len(chunks), batch_size):
        batch = chunks[start : start + batch_size]
        try:
            rows.append(provider.embed_batch([c.text for c in batch]))
        except ProviderError as exc:
            raise ProviderError(f"embedding batch {start // batch_size} failed: {exc}") from exc
    matrix = _normalize_rows(np.concatenate(rows, axis=0))
    return VectorStore(
        provider_name=provider.name,
        dim=provider.dim,
        chunk_ids=[c.chunk_id for c in chunks],
        article_ids=[c.article_id for c in chunks],
        vectors=matrix,
    )


def search(
    store: VectorStore,
    provider: EmbeddingProvider,
    query_text: str,
    k: int,
    query_id: str = "",
    aggregate: str = "max",
) -> RankedList:
    """Top-k articles by cosine between the query and every chunk."""
    if provider.name != store.provider_name:
        raise UsageError(
            f"store was built with provider '{store.provider_name}', got '{provider.name}'"
        )
    if provider.dim != store.dim:
        raise UsageError(f"store dim {store.dim} does not match provider dim {provider.dim}")
    query = provider.embed_batch([query_text])[0]
    norm = float(np.linalg.norm(query))
    if norm > 0.0:
        query = query / norm
    scores = store.vectors @ query
    unit_scores = {cid: float(s) for cid, s in zip(store.chunk_ids, scores)}
    return aggregate_to_articles(unit_scores, store.chunk_to_article, k, query_id, aggregate)


def pairwise_similarities(
    texts_a: Sequence[str],
    texts_b: Sequence[str],
    provider: EmbeddingProvider,
) -> np.ndarray:
    """Matrix of cosines between two text lists: M[i][j] = cos(a_i, b_j)."""
    if not texts_a or not texts_b:
        raise UsageError("pairwise_similarities requires two nonempty text lists")
    a = _normalize_rows(provider.embed_batch(texts_a))
    b = _normalize_rows(provider.embed_batch(texts_b))
    return a @ b.T


def save_store(store: VectorStore, path: str | Path) -> None:
    """Write the store: header (magic, version, provider, dim, n_chunks),
    row-major little-endian float32 rows, then the chunk/article id table."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        provider_bytes = store.provider_name.encode("utf-8")
        fh.write(struct.pack("<III", _FORMAT_VERSION, len(provider_bytes), store.dim))
        fh.write(provider_bytes)
        fh.write(struct.pack("<I", len(store.chunk_ids)))
        fh.write(store.vectors.astype("<f4").tobytes(order="C"))
        for chunk_id, article_id in zip(store.chunk_ids, store.article_ids):
            for value in (chunk_id, article_id):
                raw = value.encode("utf-8")
                fh.write(struct.pack("<I", len(raw)))
                fh.write(raw)


def load_store(path: str | Path) -> VectorStore:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError(f"not a vector store file: {path}")
        version, name_len, dim = struct.unpack("<III", fh.read(12))
        if version != _FORMAT_VERSION:
            raise DataError(f"unsupported vector store format version {version} in {path}")
        provider_name = fh.read(name_len).decode("utf-8")
        (n_chunks,) = struct.unpack("<I", fh.read(4))
        raw = fh.read(n_chunks * dim * 4)
        if len(raw) != n_chunks * dim * 4:
            raise DataError(f"truncated vector store file: {path}")
        matrix = np.frombuffer(raw, dtype="<f4").reshape(n_chunks, dim).astype(np.float64)
        chunk_ids: list[str] = []
        article_ids: list[str] = []
        for _ in range(n_chunks):
            pair: list[str] = []
            for _ in range(2):
                (length,) = struct.unpack("<I", fh.read(4))
                pair.append(fh.read(length).decode("utf-8"))
            chunk_ids.append(pair[0])
            article_ids.append(pair[1])
    return VectorStore(
        provider_name=provider_name,
        dim=dim,
        chunk_ids=chunk_ids,
        article_ids=article_ids,
        vectors=matrix,
    )
