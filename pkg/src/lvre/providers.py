"""Embedding providers, rerankers, and binary embedding persistence.

Three provider families share one contract: file-backed stores for cached
vectors, HTTP clients for live encoder services, and a seeded deterministic
mock for tests and golden runs. Vectors are persisted at 32-bit precision
(what encoder models emit); all similarity math upcasts to 64-bit.
"""

from __future__ import annotations

import struct
import time
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Protocol

import numpy as np
import requests

from .aural import RerankerTransportError
from .embedding import EmbeddingVector

STORE_MAGIC = b"LVRE"
STORE_VERSION = 1

# Mock-provider hash scheme, fixed so fixtures are reproducible anywhere:
# 64-bit FNV-1a over the input's UTF-8 bytes, XORed with the seed, drives a
# xorshift64 generator; each step yields one component in [-1, 1) via the
# top 53 bits, and the vector is L2-normalized in float64.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


class StoreFormatError(ValueError):
    """Raised when an embedding store file violates the binary layout."""


class EmbeddingServiceError(RuntimeError):
    """Raised when an embedding HTTP service fails or breaks protocol."""


class EmbeddingProvider(Protocol):
    """Source of fixed-dimension embeddings for texts and clip references."""

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...

    def embed_clips(self, clip_refs: Sequence[str]) -> list[EmbeddingVector]: ...

    def dim(self) -> int: ...


class EmbeddingStore:
    """Immutable id -> float32 vector map with a fixed dimension."""

    def __init__(self, dim: int, vectors: Mapping[str, np.ndarray]):
        if dim < 1:
            raise StoreFormatError(f"dimension must be >= 1, got {dim}")
        self._dim = dim
        self._vectors: dict[str, np.ndarray] = {}
        for clip_id, values in vectors.items():
            arr = np.asarray(values, dtype=np.float32)
            if arr.ndim != 1 or arr.shape[0] != dim:
                raise StoreFormatError(
                    f"vector for {clip_id!r} has length {arr.size}, expected {dim}"
                )
            if not np.all(np.isfinite(arr)):
                raise StoreFormatError(f"non-finite vector component for {clip_id!r}")
            arr = arr.copy()
            arr.flags.writeable = False
            self._vectors[clip_id] = arr

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def count(self) -> int:
        return len(self._vectors)

    def ids(self) -> list[str]:
        return list(self._vectors)

    def __contains__(self, clip_id: str) -> bool:
        return clip_id in self._vectors

    def vector(self, clip_id: str) -> EmbeddingVector:
        if clip_id not in self._vectors:
            raise ValueError(f"unknown id {clip_id}")
        return EmbeddingVector(self._vectors[clip_id])


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Write the binary layout: magic, version u16, dim u32, count u64,
    then per record [id length u16, id UTF-8 bytes, dim little-endian f32].
    """
    path = Path(path)
    chunks = [STORE_MAGIC, struct.pack("<HIQ", STORE_VERSION, store.dim, store.count)]
    for clip_id in store.ids():
        id_bytes = clip_id.encode("utf-8")
        if len(id_bytes) > 0xFFFF:
            raise StoreFormatError(f"id too long to persist: {clip_id[:40]!r}...")
        chunks.append(struct.pack("<H", len(id_bytes)))
        chunks.append(id_bytes)
        chunks.append(store._vectors[clip_id].astype("<f4").tobytes())
    path.write_bytes(b"".join(chunks))


def load_store(path: str | Path) -> EmbeddingStore:
    """Read and fully validate a store file written by save_store."""
    data = Path(path).read_bytes()
    view = memoryview(data)
    offset = 0

    def take(n: int, what: str) -> memoryview:
        nonlocal offset
        if offset + n > len(view):
            raise StoreFormatError(f"truncated file: {what}")
        chunk = view[offset : offset + n]
        offset += n
        return chunk

    if bytes(take(4, "magic")) != STORE_MAGIC:
        raise StoreFormatError("bad magic")
    version, dim, count = struct.unpack("<HIQ", take(14, "header"))
    if version != STORE_VERSION:
        raise StoreFormatError(f"unsupported format version {version}")
    if dim < 1:
        raise StoreFormatError(f"header dimension must be >= 1, got {dim}")

    vectors: dict[str, np.ndarray] = {}
    for i in range(count):
        (id_len,) = struct.unpack("<H", take(2, f"record {i} id length"))
        clip_id = bytes(take(id_len, f"record {i} id")).decode("utf-8")
        payload = take(dim * 4, f"record {i} payload length mismatch")
        if clip_id in vectors:
            raise StoreFormatError(f"duplicate id {clip_id!r}")
        vectors[clip_id] = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    if offset != len(view):
        raise StoreFormatError(f"{len(view) - offset} trailing bytes after records")
    return EmbeddingStore(dim=dim, vectors=vectors)


class StoreBackedProvider:
    """Serves vectors by key lookup from a loaded store.

    Both contract methods are lookups: embed_clips by clip id and
    embed_texts by the literal text string, so store files choose their own
    keying. Unknown keys raise with the offending key named.
    """

    def __init__(self, store: EmbeddingStore):
        self._store = store

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._store.vector(t) for t in texts]

    def embed_clips(self, clip_refs: Sequence[str]) -> list[EmbeddingVector]:
        return [self._store.vector(c) for c in clip_refs]

    def dim(self) -> int:
        return self._store.dim


def merge_stores(paths: Sequence[str | Path]) -> EmbeddingStore:
    """Union several store files into one; duplicate ids are an error."""
    if not paths:
        raise ValueError("no store paths given")
    stores = [load_store(p) for p in paths]
    dims = {s.dim for s in stores}
    if len(dims) != 1:
        raise StoreFormatError(f"stores disagree on dimension: {sorted(dims)}")
    merged: dict[str, np.ndarray] = {}
    for store in stores:
        for clip_id in store.ids():
            if clip_id in merged:
                raise StoreFormatError(f"duplicate id {clip_id!r} across stores")
            merged[clip_id] = store._vectors[clip_id]
    return EmbeddingStore(dim=stores[0].dim, vectors=merged)


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _xorshift64(state: int) -> int:
    state ^= (state << 13) & _MASK64
    state ^= state >> 7
    state ^= (state << 17) & _MASK64
    return state


class MockEmbeddingProvider:
    """Deterministic seeded provider: same (seed, input) -> same vector,
    on any run and platform. Clip refs are hashed as opaque strings, so the
    mock needs no media access. All outputs are unit-norm.
    """

    def __init__(self, seed: int, dim: int):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        self._seed = seed & _MASK64
        self._dim = dim

    def _vector(self, key: str) -> EmbeddingVector:
        state = _fnv1a64(key.encode("utf-8")) ^ self._seed
        if state == 0:
            state = _FNV_OFFSET
        components = np.empty(self._dim, dtype=np.float64)
        for i in range(self._dim):
            state = _xorshift64(state)
            components[i] = 2.0 * ((state >> 11) * 2.0**-53) - 1.0
        norm = float(np.linalg.norm(components))
        if norm == 0.0:
            components[0] = 1.0
            norm = 1.0
        return EmbeddingVector(components / norm)

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        return [self._vector(t) for t in texts]

    def embed_clips(self, clip_refs: Sequence[str]) -> list[EmbeddingVector]:
        return [self._vector(c) for c in clip_refs]

    def dim(self) -> int:
        return self._dim


def mock_provider(seed: int, dim: int) -> MockEmbeddingProvider:
    return MockEmbeddingProvider(seed=seed, dim=dim)


class _TransportFailure(RuntimeError):
    pass


def _post_json(
    session: requests.Session,
    url: str,
    payload: dict,
    timeout: float,
    retries: int,
    backoff_s: float,
    bearer_token: str | None = None,
) -> dict:
    """POST with retry on transient failures (connection errors, timeouts,
    5xx), exponential backoff between attempts. 4xx is permanent.
    """
    headers = {}
    if bearer_token:
        headers["Authorization"] = f"Bearer {bearer_token}"
    last_error = "no attempt made"
    for attempt in range(retries + 1):
        if attempt > 0 and backoff_s > 0:
            time.sleep(backoff_s * 2 ** (attempt - 1))
        try:
            response = session.post(url, json=payload, timeout=timeout, headers=headers)
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
            continue
        if 500 <= response.status_code < 600:
            last_error = f"server error {response.status_code}"
            continue
        if response.status_code != 200:
            raise _TransportFailure(f"status {response.status_code}: {response.text[:200]}")
        try:
            return response.json()
        except ValueError as exc:
            raise _TransportFailure(f"malformed JSON response: {exc}") from exc
    raise _TransportFailure(f"gave up after {retries + 1} attempts: {last_error}")


class HttpEmbeddingProvider:
    """Batched client for the embed protocol:
    POST {"texts": [...]} -> {"vectors": [[...], ...]}.

    Clip refs are sent through the same protocol as strings; the serving
    side decides how to resolve them. Up to max_in_flight batches run
    concurrently; results keep input order.
    """

    def __init__(
        self,
        endpoint_url: str,
        timeout: float = 10.0,
        retries: int = 2,
        batch_size: int = 64,
        max_in_flight: int = 4,
        bearer_token: str | None = None,
        backoff_s: float = 0.1,
        dim: int | None = None,
        session: requests.Session | None = None,
    ):
        if batch_size < 1 or max_in_flight < 1:
            raise ValueError("batch_size and max_in_flight must be >= 1")
        self._url = endpoint_url
        self._timeout = timeout
        self._retries = retries
        self._batch_size = batch_size
        self._max_in_flight = max_in_flight
        self._token = bearer_token
        self._backoff_s = backoff_s
        self._dim = dim
        self._session = session or requests.Session()

    def _embed_batch(self, batch: list[str]) -> list[EmbeddingVector]:
        try:
            body = _post_json(
                self._session,
                self._url,
                {"texts": batch},
                self._timeout,
                self._retries,
                self._backoff_s,
                self._token,
            )
        except _TransportFailure as exc:
            raise EmbeddingServiceError(str(exc)) from exc
        vectors = body.get("vectors")
        if not isinstance(vectors, list):
            raise EmbeddingServiceError("response missing 'vectors' list")
        if len(vectors) != len(batch):
            raise EmbeddingServiceError(
                f"cardinality mismatch: sent {len(batch)} texts, got {len(vectors)} vectors"
            )
        out = []
        for values in vectors:
            try:
                vec = EmbeddingVector(values)
            except (TypeError, ValueError) as exc:
                raise EmbeddingServiceError(f"bad vector in response: {exc}") from exc
            if self._dim is None:
                self._dim = vec.dim
            elif vec.dim != self._dim:
                raise EmbeddingServiceError(
                    f"dimension inconsistency: expected {self._dim}, got {vec.dim}"
                )
            out.append(vec)
        return out

    def embed_texts(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        texts = list(texts)
        if not texts:
            return []
        batches = [
            texts[i : i + self._batch_size]
            for i in range(0, len(texts), self._batch_size)
        ]
        if len(batches) == 1:
            return self._embed_batch(batches[0])
        workers = min(self._max_in_flight, len(batches))
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(self._embed_batch, batches))
        out = [vec for batch in results for vec in batch]
        # Concurrent batches race the lazily-learned dim; re-check the union.
        dims = {vec.dim for vec in out}
        if len(dims) > 1:
            raise EmbeddingServiceError(
                f"dimension inconsistency across batches: {sorted(dims)}"
            )
        return out

    def embed_clips(self, clip_refs: Sequence[str]) -> list[EmbeddingVector]:
        return self.embed_texts(clip_refs)

    def dim(self) -> int:
        if self._dim is None:
            raise EmbeddingServiceError("dimension unknown before the first request")
        return self._dim


def http_provider(
    endpoint_url: str, timeout: float = 10.0, retries: int = 2, **kwargs
) -> HttpEmbeddingProvider:
    return HttpEmbeddingProvider(endpoint_url, timeout=timeout, retries=retries, **kwargs)


class HttpReranker:
    """Client for the rerank protocol: POST {"query": ..., "candidates":
    [{"id": ..., "text": ...}]} -> {"ranking": [ids...]}.

    Shares the embed client's transport policy. Transport and protocol
    failures raise RerankerTransportError so callers can fall back to the
    identity reranker.
    """

    def __init__(
        self,
        endpoint_url: str,
        timeout: float = 30.0,
        retries: int = 2,
        bearer_token: str | None = None,
        backoff_s: float = 0.1,
        session: requests.Session | None = None,
    ):
        self._url = endpoint_url
        self._timeout = timeout
        self._retries = retries
        self._token = bearer_token
        self._backoff_s = backoff_s
        self._session = session or requests.Session()

    def rerank(
        self, query_text: str, candidates: Sequence[tuple[str, str]]
    ) -> list[str]:
        payload = {
            "query": query_text,
            "candidates": [{"id": cid, "text": text} for cid, text in candidates],
        }
        try:
            body = _post_json(
                self._session,
                self._url,
                payload,
                self._timeout,
                self._retries,
                self._backoff_s,
                self._token,
            )
        except _TransportFailure as exc:
            raise RerankerTransportError(str(exc)) from exc
        ranking = body.get("ranking")
        if not isinstance(ranking, list):
            raise RerankerTransportError("response missing 'ranking' list")
        return ranking
