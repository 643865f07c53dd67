"""Embedding vectors, cosine similarity, and deterministic top-K selection.

Similarity is always computed in float64 regardless of how vectors were
stored, so results do not depend on provider precision or accumulation
order. Ranking ties are broken by (interval start, clip id) to make every
top-K list fully deterministic.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .timeline import TimeInterval


class EmbeddingVector:
    """A fixed-dimension real vector with finite components.

    Wraps an immutable float64 numpy array. No unit-norm assumption is made
    anywhere: providers may or may not pre-normalize.
    """

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("embedding must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError("embedding contains non-finite components")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    def __setattr__(self, name, value):
        raise AttributeError("EmbeddingVector is immutable")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingVector):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"EmbeddingVector(dim={self.dim})"


@dataclass(frozen=True)
class ScoredItem:
    """A clip id with one stream's similarity score."""

    clip_id: str
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite score for {self.clip_id!r}: {self.score}")


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Angular similarity (a.b)/(|a||b|), clamped to [-1, 1].

    Zero-norm vectors are an error, not similarity 0: a zero embedding means
    the provider failed and silently ranking it last would hide the bug.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    norm_a = float(np.linalg.norm(a.values))
    norm_b = float(np.linalg.norm(b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ValueError("zero-norm embedding vector")
    sim = float(np.dot(a.values, b.values)) / (norm_a * norm_b)
    # Clamp: rounding can push |sim| marginally past 1.
    return min(1.0, max(-1.0, sim))


def rank_key(
    clip_id: str, score: float, clip_intervals: Mapping[str, TimeInterval]
) -> tuple[float, float, str]:
    """Sort key for ranked lists: score desc, interval start asc, id asc."""
    try:
        start = clip_intervals[clip_id].start_s
    except KeyError:
        raise ValueError(f"no interval known for clip {clip_id!r}") from None
    return (-score, start, clip_id)


def top_k(
    items: Sequence[tuple[str, EmbeddingVector]],
    query: EmbeddingVector,
    k: int,
    clip_intervals: Mapping[str, TimeInterval],
) -> list[ScoredItem]:
    """Return the min(k, len(items)) highest-similarity items, ranked.

    Fully deterministic: equal scores order by earlier interval start, then
    lexicographic clip id.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scored = []
    for clip_id, vector in items:
        try:
            score = cosine_similarity(vector, query)
        except ValueError as exc:
            raise ValueError(f"clip {clip_id!r}: {exc}") from exc
        scored.append(ScoredItem(clip_id=clip_id, score=score))
    scored.sort(key=lambda item: rank_key(item.clip_id, item.score, clip_intervals))
    return scored[:k]
