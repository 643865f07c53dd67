"""Two-stage aural retrieval over subtitle text.

Stage one ranks subtitles by embedding similarity and extends the top-K
with every subtitle that shares at least one word with the query. Stage two
hands the extended list to a pluggable re-ranker (an LLM in production) that
only reorders; final scores always come from the text-encoder similarities,
never from the re-ranker.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Protocol

from .embedding import EmbeddingVector, ScoredItem, rank_key, top_k
from .timeline import Clip, TimeInterval

logger = logging.getLogger(__name__)

# Reranker inputs are uncapped in principle, but stopword-heavy queries can
# lexically match nearly every subtitle; the cap bounds the request size.
DEFAULT_RERANKER_CANDIDATE_CAP = 100

_WORD_RE = re.compile(r"[^\W_]+", re.UNICODE)


class RerankerTransportError(RuntimeError):
    """A reranker call failed in transit; callers may fall back to identity."""


class Reranker(Protocol):
    """Reorders candidate subtitles by relevance to a query.

    Returns clip ids drawn from the input candidates. Output is repaired by
    the caller, so implementations may be sloppy but must not be trusted.
    """

    def rerank(
        self, query_text: str, candidates: Sequence[tuple[str, str]]
    ) -> list[str]: ...


class IdentityReranker:
    """Keeps candidates in their incoming order. The offline fallback."""

    def rerank(
        self, query_text: str, candidates: Sequence[tuple[str, str]]
    ) -> list[str]:
        return [clip_id for clip_id, _ in candidates]


class CandidateOrigin(str, Enum):
    SEMANTIC = "semantic"
    LEXICAL = "lexical"
    BOTH = "both"


@dataclass(frozen=True)
class CandidateEntry:
    clip_id: str
    subtitle_text: str
    text_similarity: float
    origin: CandidateOrigin


@dataclass(frozen=True)
class CandidateSet:
    """Ordered, deduplicated candidates with their text similarities."""

    entries: tuple[CandidateEntry, ...]

    def __post_init__(self):
        ids = [e.clip_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate clip ids in candidate set")

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def tokenize(text: str) -> set[str]:
    """Unicode-aware lowercase word tokens; splits on non-alphanumerics.

    No stemming and no stopword removal: word-overlap matching stays a
    single transparent heuristic.
    """
    return set(_WORD_RE.findall(text.lower()))


def aural_semantic_top_k(
    subtitle_embeddings: Sequence[tuple[str, EmbeddingVector]],
    query_embedding: EmbeddingVector,
    k_semantic: int,
    clip_intervals: Mapping[str, TimeInterval],
) -> list[ScoredItem]:
    """Top-K subtitles by embedding similarity (same contract as top_k)."""
    return top_k(subtitle_embeddings, query_embedding, k_semantic, clip_intervals)


def lexical_candidates(
    clips: Iterable[Clip],
    query_text: str,
    stopwords: frozenset[str] | set[str] | None = None,
) -> set[str]:
    """Ids of clips whose subtitle shares at least one word with the query.

    Stopword filtering is off by default; pass a stopword set to drop those
    tokens from the query before matching.
    """
    query_tokens = tokenize(query_text)
    if stopwords:
        query_tokens -= {w.lower() for w in stopwords}
    if not query_tokens:
        return set()
    return {
        clip.clip_id
        for clip in clips
        if tokenize(clip.subtitle_text) & query_tokens
    }


def extend_candidates(
    semantic: Sequence[ScoredItem],
    lexical: set[str],
    all_scores: Mapping[str, float],
    clips: Mapping[str, str],
    clip_intervals: Mapping[str, TimeInterval],
) -> CandidateSet:
    """Union the semantic top-K with lexical matches, deduplicated.

    Semantic items come first in their ranked order; lexical-only items
    follow, ordered by text similarity with the standard tie-break. Every
    lexical id must already have a similarity in all_scores (similarities
    are computed for all subtitles before candidate generation).
    """
    missing = sorted(lexical - set(all_scores))
    if missing:
        raise ValueError(f"lexical ids missing from all_scores: {missing}")

    semantic_ids = {item.clip_id for item in semantic}
    entries = [
        CandidateEntry(
            clip_id=item.clip_id,
            subtitle_text=clips[item.clip_id],
            text_similarity=item.score,
            origin=CandidateOrigin.BOTH
            if item.clip_id in lexical
            else CandidateOrigin.SEMANTIC,
        )
        for item in semantic
    ]
    lexical_only = sorted(
        lexical - semantic_ids,
        key=lambda cid: rank_key(cid, all_scores[cid], clip_intervals),
    )
    entries.extend(
        CandidateEntry(
            clip_id=cid,
            subtitle_text=clips[cid],
            text_similarity=all_scores[cid],
            origin=CandidateOrigin.LEXICAL,
        )
        for cid in lexical_only
    )
    return CandidateSet(entries=tuple(entries))


def rerank_candidates(
    candidates: CandidateSet,
    query_text: str,
    reranker: Reranker,
    k_final: int,
    reranker_candidate_cap: int = DEFAULT_RERANKER_CANDIDATE_CAP,
) -> list[ScoredItem]:
    """Reorder candidates through the reranker and keep the first k_final.

    The reranker output is repaired rather than trusted: unknown ids are
    dropped with a warning, duplicates collapse to their first occurrence,
    and omitted candidates are appended at the tail in their original order.
    Scores on the returned items are the stored text similarities; the
    reranker contributes ordering only.
    """
    if k_final < 1:
        raise ValueError(f"k_final must be >= 1, got {k_final}")
    if len(candidates) == 0:
        return []

    sent = list(candidates)[:reranker_candidate_cap]
    ranking = reranker.rerank(query_text, [(e.clip_id, e.subtitle_text) for e in sent])

    by_id = {e.clip_id: e for e in candidates}
    repaired: list[str] = []
    seen: set[str] = set()
    for clip_id in ranking:
        if not isinstance(clip_id, str) or clip_id not in by_id:
            logger.warning("reranker returned unknown id %r; dropped", clip_id)
            continue
        if clip_id in seen:
            continue
        repaired.append(clip_id)
        seen.add(clip_id)
    repaired.extend(e.clip_id for e in candidates if e.clip_id not in seen)

    return [
        ScoredItem(clip_id=cid, score=by_id[cid].text_similarity)
        for cid in repaired[:k_final]
    ]
