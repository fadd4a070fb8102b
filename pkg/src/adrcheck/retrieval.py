"""Deterministic embeddings and exact top-k nearest-neighbor retrieval."""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .corpus import CodeChunk

log = logging.getLogger(__name__)

DEFAULT_EMBEDDING_DIMS = 256
DEFAULT_TOP_K = 5

_TOKEN_RE = re.compile(r"[a-z0-9_]+")


class RetrievalError(RuntimeError):
    pass


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Anything that turns a batch of texts into fixed-width vectors."""

    dims: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class HashingEmbedder:
    """Offline default embedder: feature-hashing bag of tokens, L2-normalized.

    Tokens are lowercase word/identifier runs; each token is hashed with
    blake2b so vectors are stable across processes and platforms.
    """

    def __init__(self, dims: int = DEFAULT_EMBEDDING_DIMS) -> None:
        if dims <= 0:
            raise ValueError("dims must be positive")
        self.dims = dims

    def _token_slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        h = int.from_bytes(digest, "big")
        sign = 1.0 if h & 1 == 0 else -1.0
        return (h >> 1) % self.dims, sign

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dims, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            slot, sign = self._token_slot(token)
            vec[slot] += sign
        norm = float(np.linalg.norm(vec))
        if norm > 0.0:
            vec /= norm
        return vec

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self.embed_one(t) for t in texts]


class HttpEmbeddingProvider:
    """Client for an external embedding endpoint.

    Wire format: POST {"texts": [...]} -> {"vectors": [[...], ...]}.
    """

    def __init__(self, endpoint: str, dims: int, timeout: float = 60.0, session=None) -> None:
        import requests

        self.endpoint = endpoint
        self.dims = dims
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        resp = self._session.post(self.endpoint, json={"texts": list(texts)}, timeout=self.timeout)
        resp.raise_for_status()
        vectors = resp.json()["vectors"]
        if len(vectors) != len(texts):
            raise RetrievalError("embedding endpoint returned wrong vector count")
        out = [np.asarray(v, dtype=np.float64) for v in vectors]
        for v in out:
            if v.shape != (self.dims,):
                raise RetrievalError(f"embedding endpoint returned dims {v.shape}, expected {self.dims}")
        return out


@dataclass(frozen=True)
class VectorIndex:
    """Immutable exact-search index: parallel chunk_id and vector arrays."""

    dims: int
    chunk_ids: tuple[str, ...]
    vectors: np.ndarray  # shape (len(chunk_ids), dims)

    def __len__(self) -> int:
        return len(self.chunk_ids)


@dataclass(frozen=True)
class RetrievalResult:
    chunk_id: str
    distance: float  # squared L2; ordering identical to L2
    rank: int


def embed(text: str, embedder: EmbeddingProvider) -> np.ndarray:
    """Embed one text; empty input is an error."""
    if not text.strip():
        raise ValueError("cannot embed empty text")
    vec = embedder.embed_batch([text])[0]
    if not np.all(np.isfinite(vec)):
        raise RetrievalError("embedder produced non-finite values")
    return vec


def build_index(chunks: Sequence[CodeChunk], embedder: EmbeddingProvider) -> VectorIndex:
    """Embed all chunks in input order into an exact-search index."""
    if not chunks:
        raise ValueError("cannot build an index from zero chunks")
    ids = [c.chunk_id for c in chunks]
    if len(set(ids)) != len(ids):
        seen: set[str] = set()
        dupes = sorted({i for i in ids if i in seen or seen.add(i)})  # type: ignore[func-returns-value]
        raise ValueError(f"duplicate chunk_ids: {dupes}")
    vectors = embedder.embed_batch([c.text for c in chunks])
    matrix = np.vstack([np.asarray(v, dtype=np.float64) for v in vectors])
    if matrix.shape != (len(chunks), embedder.dims):
        raise RetrievalError(f"embedding matrix has shape {matrix.shape}")
    return VectorIndex(dims=embedder.dims, chunk_ids=tuple(ids), vectors=matrix)


def query_top_k(index: VectorIndex, query: np.ndarray, k: int = DEFAULT_TOP_K) -> list[RetrievalResult]:
    """Exact k nearest entries by L2 distance; ties broken by chunk_id."""
    if k <= 0:
        raise ValueError("k must be positive")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dims,):
        raise ValueError(f"query dims {query.shape} do not match index dims {index.dims}")

    diffs = index.vectors - query
    sq_dists = np.einsum("ij,ij->i", diffs, diffs)
    order = sorted(range(len(index)), key=lambda i: (sq_dists[i], index.chunk_ids[i]))
    top = order[: min(k, len(index))]
    return [
        RetrievalResult(chunk_id=index.chunk_ids[i], distance=float(sq_dists[i]), rank=rank)
        for rank, i in enumerate(top, start=1)
    ]


# --- serialization -----------------------------------------------------------

def index_to_dict(index: VectorIndex) -> dict:
    return {
        "dims": index.dims,
        "entries": [
            {"chunk_id": cid, "values": [float(x) for x in index.vectors[i]]}
            for i, cid in enumerate(index.chunk_ids)
        ],
    }


def index_from_dict(data: dict) -> VectorIndex:
    ids = tuple(e["chunk_id"] for e in data["entries"])
    vectors = np.asarray([e["values"] for e in data["entries"]], dtype=np.float64)
    if vectors.size == 0:
        vectors = vectors.reshape(0, data["dims"])
    return VectorIndex(dims=data["dims"], chunk_ids=ids, vectors=vectors)


def write_index(index: VectorIndex, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(index_to_dict(index), ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )


def read_index(path: str | Path) -> VectorIndex:
    return index_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
