"""Embedding providers, the chunk vector index, and cosine top-k search."""

from __future__ import annotations

import hashlib
import math
import re
import threading
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx
import numpy as np

from .llm import ProviderError, call_with_retries

_TOKEN = re.compile(r"\w+")


class ZeroNormError(ValueError):
    pass


class EmbeddingProvider(Protocol):
    name: str
    model_id: str
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def fingerprint(provider: EmbeddingProvider) -> str:
    return f"{provider.name}:{provider.model_id}:{provider.dimension}"


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


class HashingEmbedder:
    """Deterministic bag-of-tokens embedder: each lowercase word token is hashed
    into one of ``dimension`` buckets, counts are L2-normalized."""

    name = "hashing"
    model_id = "token-hash-v1"

    def __init__(self, dimension: int = 64) -> None:
        self.dimension = dimension

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "big") % self.dimension

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dimension), dtype=np.float64)
        for row, text in enumerate(texts):
            tokens = tokenize(text) or [text]
            for token in tokens:
                out[row, self._bucket(token)] += 1.0
            out[row] /= np.linalg.norm(out[row])
        return out


class HttpEmbedder:
    """Client for a JSON embedding service: ``POST {"texts": [...]}`` returning
    ``{"vectors": [[...], ...]}``. Sends texts in batches and retries
    transport failures."""

    name = "http"

    def __init__(
        self,
        url: str,
        model_id: str,
        dimension: int,
        *,
        batch_size: int = 64,
        retries: int = 2,
        timeout_s: float = 30.0,
        api_key: str | None = None,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.url = url
        self.model_id = model_id
        self.dimension = dimension
        self.batch_size = batch_size
        self.retries = retries
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout_s, headers=headers, transport=transport)

    def _post(self, batch: list[str]) -> list[list[float]]:
        try:
            resp = self._client.post(self.url, json={"texts": batch})
        except httpx.HTTPError as exc:
            raise ProviderError(f"embedding transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise ProviderError(f"embedding service returned HTTP {resp.status_code}")
        if resp.status_code >= 400:
            raise ProviderError(f"embedding request rejected: HTTP {resp.status_code}", retryable=False)
        try:
            vectors = resp.json()["vectors"]
        except (ValueError, KeyError) as exc:
            raise ProviderError(f"malformed embedding payload: {exc}", retryable=False) from exc
        if len(vectors) != len(batch):
            raise ProviderError(f"expected {len(batch)} vectors, got {len(vectors)}", retryable=False)
        return vectors

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows: list[list[float]] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            vectors, _ = call_with_retries(lambda: self._post(batch), self.retries)
            rows.extend(vectors)
        if not rows:
            return np.zeros((0, self.dimension))
        out = np.asarray(rows, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.dimension or not np.all(np.isfinite(out)):
            raise ProviderError("embedding service returned vectors of wrong dimension or non-finite values", retryable=False)
        return out


def embed_texts(provider: EmbeddingProvider, texts: Sequence[str]) -> list[np.ndarray]:
    if not texts:
        return []
    return list(provider.embed(list(texts)))


def _sqnorm(v: np.ndarray) -> float:
    return float(np.dot(v, v))


def cosine(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = _sqnorm(a), _sqnorm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine undefined for a zero-norm vector")
    return float(np.dot(a, b)) / (math.sqrt(na) * math.sqrt(nb))


@dataclass(frozen=True)
class ScoredChunk:
    chunk_id: str
    score: float


class VectorIndex:
    """Exhaustive-scan cosine index over chunk vectors. Immutable once built."""

    def __init__(self, chunk_ids: Sequence[str], vectors: np.ndarray, fingerprint: str) -> None:
        vectors = np.asarray(vectors, dtype=np.float64)
        if len(chunk_ids) != len(vectors):
            raise ValueError("one vector per chunk id required")
        if len(set(chunk_ids)) != len(chunk_ids):
            raise ValueError("duplicate chunk ids in index")
        if vectors.size and not np.all(np.isfinite(vectors)):
            raise ValueError("non-finite vector values")
        self.chunk_ids = list(chunk_ids)
        self.vectors = vectors.reshape(len(self.chunk_ids), vectors.shape[1] if vectors.ndim == 2 else 0)
        self.fingerprint = fingerprint
        self._pos = {cid: i for i, cid in enumerate(self.chunk_ids)}
        self._norms = np.sqrt(np.einsum("ij,ij->i", self.vectors, self.vectors)) if self.chunk_ids else np.zeros(0)
        if np.any(self._norms == 0.0):
            raise ZeroNormError("index contains a zero-norm vector")
        # Rank of each id in ascending id order, used as the tie-breaker.
        order = sorted(range(len(self.chunk_ids)), key=self.chunk_ids.__getitem__)
        self._id_rank = np.empty(len(order), dtype=np.int64)
        self._id_rank[order] = np.arange(len(order))

    @classmethod
    def build(cls, provider: EmbeddingProvider, chunks: Iterable) -> "VectorIndex":
        chunks = list(chunks)
        dim = provider.dimension
        vectors = provider.embed([c.text for c in chunks]) if chunks else np.zeros((0, dim))
        return cls([c.chunk_id for c in chunks], vectors, fingerprint(provider))

    def __len__(self) -> int:
        return len(self.chunk_ids)

    def __contains__(self, chunk_id: object) -> bool:
        return chunk_id in self._pos

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1] if self.vectors.ndim == 2 else 0

    def vector(self, chunk_id: str) -> np.ndarray:
        return self.vectors[self._pos[chunk_id]]

    def subset(self, chunk_ids: Iterable[str]) -> "VectorIndex":
        wanted = set(chunk_ids)
        keep = [cid for cid in self.chunk_ids if cid in wanted]
        rows = [self._pos[cid] for cid in keep]
        return VectorIndex(keep, self.vectors[rows] if rows else np.zeros((0, self.dimension)), self.fingerprint)

    def with_chunks(self, provider: EmbeddingProvider, chunks: Iterable) -> "VectorIndex":
        """New index with ``chunks`` added (replacing vectors of existing ids)."""
        chunks = list(chunks)
        if fingerprint(provider) != self.fingerprint and len(self):
            raise ValueError("provider fingerprint differs from the index's")
        added = VectorIndex.build(provider, chunks)
        replaced = {c.chunk_id for c in chunks}
        keep = [cid for cid in self.chunk_ids if cid not in replaced]
        base = self.vectors[[self._pos[c] for c in keep]] if keep else np.zeros((0, added.dimension or self.dimension))
        vectors = np.vstack([base, added.vectors]) if len(added) else base
        return VectorIndex(keep + added.chunk_ids, vectors, added.fingerprint)

    def without(self, chunk_ids: Iterable[str]) -> "VectorIndex":
        drop = set(chunk_ids)
        return self.subset({cid for cid in self.chunk_ids if cid not in drop})

    def scores(self, query_vec: np.ndarray) -> np.ndarray:
        """Cosine of ``query_vec`` against every indexed vector, in index order."""
        q = np.asarray(query_vec, dtype=np.float64)
        if q.shape != (self.dimension,):
            raise ValueError(f"dimension mismatch: query {q.shape} vs index ({self.dimension},)")
        qn = _sqnorm(q)
        if qn == 0.0:
            raise ZeroNormError("zero-norm query vector")
        return (self.vectors @ q) / (math.sqrt(qn) * self._norms)

    def ranked(self, query_vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Row positions sorted by score descending then chunk id, plus all scores."""
        scores = self.scores(query_vec)
        return np.lexsort((self._id_rank, -scores)), scores

    def top_k(self, query_vec: np.ndarray, k: int) -> list[ScoredChunk]:
        if k < 1:
            raise ValueError("k must be >= 1")
        if not len(self):
            return []
        order, scores = self.ranked(query_vec)
        return [ScoredChunk(self.chunk_ids[i], float(scores[i])) for i in order[:k]]

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as fh:
            np.savez(fh, ids=np.asarray(self.chunk_ids, dtype=str), vectors=self.vectors, fingerprint=np.asarray(self.fingerprint))

    @classmethod
    def load(cls, path: str | Path) -> "VectorIndex":
        with np.load(path, allow_pickle=False) as data:
            return cls([str(x) for x in data["ids"]], data["vectors"], str(data["fingerprint"]))


def top_k(index: VectorIndex, query_vec: np.ndarray, k: int) -> list[ScoredChunk]:
    return index.top_k(query_vec, k)


class SimilarityCache:
    """Query-to-chunk similarity cache shared between retrieval and organization.

    Keyed by ``(query text, chunk id)``. Keeps the most recently used
    ``max_queries`` queries. Thread-safe.
    """

    def __init__(self, max_queries: int = 1024) -> None:
        self.max_queries = max_queries
        self._data: OrderedDict[str, dict[str, float]] = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def put_many(self, query: str, scores: dict[str, float]) -> None:
        with self._lock:
            bucket = self._data.setdefault(query, {})
            bucket.update(scores)
            self._data.move_to_end(query)
            while len(self._data) > self.max_queries:
                self._data.popitem(last=False)

    def get(self, query: str, chunk_id: str) -> float | None:
        with self._lock:
            bucket = self._data.get(query)
            value = None if bucket is None else bucket.get(chunk_id)
            if value is None:
                self.misses += 1
            else:
                self.hits += 1
            return value

    def lookup(self, query: str, chunk_id: str, compute: Callable[[], float]) -> float:
        value = self.get(query, chunk_id)
        if value is None:
            value = compute()
            self.put_many(query, {chunk_id: value})
        return value
