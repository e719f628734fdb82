"""Embedding and translation providers.

Neural models stay out-of-process: the engine talks to them through small
HTTP protocols (``POST /v1/embed`` and ``POST /v1/translate``), and ships
deterministic built-ins so every pipeline runs offline:

* :class:`HashedEmbedder` — character n-gram feature hashing, a desk-scale
  stand-in for sentence encoders (not claimed to match their quality).
* :class:`DictionaryTranslator` — token lookup table, unknown tokens pass
  through unchanged.

All providers are pure and safe for concurrent calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from typing import Iterable, Sequence

import httpx
import numpy as np

from .errors import ProviderError, UnsupportedPairError, UsageError
from .textproc import tokenize

log = logging.getLogger(__name__)

__all__ = [
    "EmbeddingProvider",
    "HashedEmbedder",
    "HttpEmbeddingProvider",
    "TranslationProvider",
    "DictionaryTranslator",
    "HttpTranslationProvider",
    "embed_batch",
    "translate",
]


def _truncate_to_tokens(text: str, max_tokens: int) -> str:
    tokens = tokenize(text)
    if len(tokens) <= max_tokens:
        return text
    end = tokens[max_tokens - 1].char_span[1]
    log.warning("truncating over-length text from %d to %d tokens", len(tokens), max_tokens)
    return text[:end]


class EmbeddingProvider:
    """Maps texts to fixed-dimension vectors.

    Subclasses implement :meth:`_embed`; this base enforces the contract:
    output order matches input order, one finite vector of length ``dim``
    per text, over-length inputs truncated to ``max_tokens`` (never an
    error).
    """

    name: str
    dim: int
    max_tokens: int = 512

    def _embed(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            raise UsageError("embed_batch requires a nonempty list of texts")
        prepared = [_truncate_to_tokens(t, self.max_tokens) for t in texts]
        vectors = np.asarray(self._embed(prepared), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(texts):
            raise ProviderError(
                f"provider '{self.name}' returned {0 if vectors.ndim != 2 else vectors.shape[0]} "
                f"vectors, expected {len(texts)}"
            )
        if vectors.shape[1] != self.dim:
            raise ProviderError(
                f"provider '{self.name}' returned vectors of dim {vectors.shape[1]}, "
                f"expected {self.dim}"
            )
        if not np.all(np.isfinite(vectors)):
            raise ProviderError(f"provider '{self.name}' returned non-finite components")
        return vectors


# 64-bit keyed BLAKE2b over the n-gram's UTF-8 bytes. Two independent keys
# keep bucket and sign decorrelated even for power-of-two dims (a multiply-
# based hash would leak byte parity into both the low bucket bit and the
# sign bit, and unrelated texts would stop cancelling out).
_BUCKET_KEY = b"claimmatch-bucket"
_SIGN_KEY = b"claimmatch-sign"


def _hash64(data: bytes, key: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8, key=key).digest(), "little")


class HashedEmbedder(EmbeddingProvider):
    """Deterministic character 3-5-gram feature-hashing embedder.

    Texts are case-folded, wrapped in boundary sentinels, and their n-gram
    counts are hashed into ``dim`` signed buckets (keyed BLAKE2b-64 for the
    bucket, an independently keyed one for the sign). Vectors are
    L2-normalized; blank text maps to the zero vector.
    """

    def __init__(self, dim: int = 256, max_tokens: int = 512):
        if dim < 8:
            raise UsageError(f"hashed embedder dim must be >= 8, got {dim}")
        self.dim = dim
        self.max_tokens = max_tokens
        self.name = f"hashed-{dim}"
        self._gram_cache: dict[str, tuple[int, int]] = {}

    def _bucket_sign(self, gram: str) -> tuple[int, int]:
        cached = self._gram_cache.get(gram)
        if cached is None:
            data = gram.encode("utf-8")
            bucket = _hash64(data, _BUCKET_KEY) % self.dim
            sign = 1 if _hash64(data, _SIGN_KEY) & 1 == 0 else -1
            cached = (bucket, sign)
            self._gram_cache[gram] = cached
        return cached

    def _embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        text = text.casefold().strip()
        if not text:
            return vec
        padded = "\x02" + text + "\x03"
        for n in (3, 4, 5):
            for i in range(len(padded) - n + 1):
                bucket, sign = self._bucket_sign(padded[i : i + n])
                vec[bucket] += sign
        norm = math.sqrt(float(np.dot(vec, vec)))
        return vec / norm if norm > 0 else vec

    def _embed(self, texts: list[str]) -> np.ndarray:
        return np.stack([self._embed_one(t) for t in texts])


def _post_json(client: httpx.Client, url: str, payload: dict) -> dict:
    try:
        response = client.post(url, json=payload)
    except httpx.HTTPError as exc:
        raise ProviderError(f"transport failure calling {url}: {exc}") from exc
    try:
        body = response.json()
    except (json.JSONDecodeError, ValueError) as exc:
        raise ProviderError(f"non-JSON response from {url} (status {response.status_code})") from exc
    if response.status_code != 200:
        message = body.get("error", "") if isinstance(body, dict) else ""
        raise ProviderError(f"{url} returned status {response.status_code}: {message}")
    if not isinstance(body, dict):
        raise ProviderError(f"unexpected response shape from {url}")
    return body


class HttpEmbeddingProvider(EmbeddingProvider):
    """Client for the embedding wire protocol.

    ``POST {base_url}/v1/embed`` with ``{"model": ..., "texts": [...]}``,
    expecting ``{"dim": int, "vectors": [[float]]}`` on 200 and
    ``{"error": str}`` otherwise. ``dim`` may be pinned up front or
    discovered from the first response.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        dim: int | None = None,
        max_tokens: int = 512,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.name = model
        self.max_tokens = max_tokens
        self._dim = dim
        self._client = client if client is not None else httpx.Client(timeout=60.0)

    @property
    def dim(self) -> int:
        if self._dim is None:
            self.embed_batch([""])  # probe; pins dim from the response
        return self._dim

    def _embed(self, texts: list[str]) -> np.ndarray:
        body = _post_json(
            self._client, f"{self.base_url}/v1/embed", {"model": self.model, "texts": texts}
        )
        if "dim" not in body or "vectors" not in body:
            raise ProviderError("embed response missing 'dim' or 'vectors'")
        dim = body["dim"]
        vectors = body["vectors"]
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            actual = len(vectors) if isinstance(vectors, list) else 0
            raise ProviderError(f"embed response carried {actual} vectors, expected {len(texts)}")
        if self._dim is None:
            self._dim = int(dim)
        elif dim != self._dim:
            raise ProviderError(f"embed response dim {dim} does not match expected {self._dim}")
        try:
            array = np.asarray(vectors, dtype=np.float64)
        except ValueError as exc:
            raise ProviderError(f"embed response vectors are ragged or non-numeric: {exc}") from exc
        if array.ndim != 2 or array.shape[1] != self._dim:
            raise ProviderError(f"embed response vectors have shape {array.shape}, expected (*, {self._dim})")
        return array


class TranslationProvider:
    """Maps text between languages; deterministic for a fixed provider."""

    name: str
    supported_pairs: frozenset[tuple[str, str]] | None  # None = defer to the remote side

    def supports(self, src: str, dst: str) -> bool:
        if src == dst:
            return True
        if self.supported_pairs is None:
            return True
        return (src, dst) in self.supported_pairs

    def _check(self, src: str, dst: str) -> None:
        if not self.supports(src, dst):
            raise UnsupportedPairError(
                f"provider '{self.name}' does not support translating {src} -> {dst}"
            )

    def _translate(self, texts: list[str], src: str, dst: str) -> list[str]:
        raise NotImplementedError

    def translate_batch(self, texts: Sequence[str], src: str, dst: str) -> list[str]:
        self._check(src, dst)
        if src == dst:
            return list(texts)
        out = self._translate(list(texts), src, dst)
        if len(out) != len(texts):
            raise ProviderError(
                f"provider '{self.name}' returned {len(out)} translations, expected {len(texts)}"
            )
        return out

    def translate(self, text: str, src: str, dst: str) -> str:
        return self.translate_batch([text], src, dst)[0]


class DictionaryTranslator(TranslationProvider):
    """Whitespace-token lookup translation; unknown tokens pass through."""

    def __init__(self, table: dict[str, str], pairs: Iterable[tuple[str, str]] = (("hi", "en"),)):
        self.table = dict(table)
        self.supported_pairs = frozenset(pairs)
        self.name = "dictionary"

    def _translate(self, texts: list[str], src: str, dst: str) -> list[str]:
        return [" ".join(self.table.get(tok, tok) for tok in text.split()) for text in texts]


class HttpTranslationProvider(TranslationProvider):
    """Client for the translation wire protocol.

    ``POST {base_url}/v1/translate`` with ``{"src", "dst", "texts"}``,
    expecting ``{"texts": [...]}``. Pair support is checked locally only
    when ``pairs`` is given; otherwise the remote side decides.
    """

    def __init__(
        self,
        base_url: str,
        pairs: Iterable[tuple[str, str]] | None = None,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.supported_pairs = None if pairs is None else frozenset(pairs)
        self.name = f"http:{self.base_url}"
        self._client = client if client is not None else httpx.Client(timeout=60.0)

    def _translate(self, texts: list[str], src: str, dst: str) -> list[str]:
        body = _post_json(
            self._client,
            f"{self.base_url}/v1/translate",
            {"src": src, "dst": dst, "texts": texts},
        )
        out = body.get("texts")
        if not isinstance(out, list) or not all(isinstance(t, str) for t in out):
            raise ProviderError("translate response missing a 'texts' list of strings")
        return out


def embed_batch(provider: EmbeddingProvider, texts: Sequence[str]) -> np.ndarray:
    return provider.embed_batch(texts)


def translate(provider: TranslationProvider, text: str, src: str, dst: str) -> str:
    return provider.translate(text, src, dst)
