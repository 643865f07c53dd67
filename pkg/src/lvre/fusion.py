"""Stream alignment by timestamp-interval identity, plus the per-query pipeline.

Both streams rank clips from the same segmentation, so sharing a timestamp
interval is exactly sharing a clip id; the final result is the id
intersection of the two top-K lists with stream scores averaged. An empty
intersection is a legitimate outcome, reported as a status rather than an
error.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum

from .aural import (
    DEFAULT_RERANKER_CANDIDATE_CAP,
    Reranker,
    aural_semantic_top_k,
    extend_candidates,
    lexical_candidates,
    rerank_candidates,
)
from .embedding import EmbeddingVector, ScoredItem, top_k
from .timeline import Clip, TimeInterval


class PipelineStageError(RuntimeError):
    """An error attributed to one stage of the retrieval pipeline."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


class RetrievalStatus(str, Enum):
    OK = "ok"
    EMPTY_INTERSECTION = "empty_intersection"


@dataclass(frozen=True)
class RetrievalEntry:
    clip_id: str
    interval: TimeInterval
    fused_score: float
    visual_score: float
    aural_score: float


@dataclass(frozen=True)
class RetrievalResult:
    entries: tuple[RetrievalEntry, ...]
    status: RetrievalStatus


@dataclass(frozen=True)
class VideoAssets:
    """Everything retrieval needs for one video: clips plus both embedding maps."""

    clips: tuple[Clip, ...]
    clip_embeddings: Mapping[str, EmbeddingVector]
    subtitle_embeddings: Mapping[str, EmbeddingVector]

    @property
    def intervals(self) -> dict[str, TimeInterval]:
        return {c.clip_id: c.interval for c in self.clips}


@dataclass(frozen=True)
class Query:
    """A user query with its embedding in each modality's space."""

    text: str
    visual_embedding: EmbeddingVector
    text_embedding: EmbeddingVector


@dataclass(frozen=True)
class RetrievalConfig:
    """Top-K sizes for the three ranking points of the pipeline."""

    k_visual: int = 10
    k_semantic: int = 30
    k_aural: int = 10
    reranker_candidate_cap: int = DEFAULT_RERANKER_CANDIDATE_CAP
    lexical_stopwords: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        for name in ("k_visual", "k_semantic", "k_aural"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


def fuse(
    visual_topk: Sequence[ScoredItem],
    aural_topk: Sequence[ScoredItem],
    intervals: Mapping[str, TimeInterval],
) -> RetrievalResult:
    """Intersect the two streams' top-K lists and average their scores.

    Keeps every id present in both lists (nothing shared is dropped), sorts
    by fused score with the standard tie-break, and flags an empty
    intersection via status.
    """
    visual_scores = {item.clip_id: item.score for item in visual_topk}
    aural_scores = {item.clip_id: item.score for item in aural_topk}
    shared = set(visual_scores) & set(aural_scores)

    entries = []
    for clip_id in shared:
        if clip_id not in intervals:
            raise ValueError(f"no interval known for clip {clip_id!r}")
        visual = visual_scores[clip_id]
        aural = aural_scores[clip_id]
        entries.append(
            RetrievalEntry(
                clip_id=clip_id,
                interval=intervals[clip_id],
                fused_score=(visual + aural) / 2,
                visual_score=visual,
                aural_score=aural,
            )
        )
    entries.sort(key=lambda e: (-e.fused_score, e.interval.start_s, e.clip_id))
    status = RetrievalStatus.OK if entries else RetrievalStatus.EMPTY_INTERSECTION
    return RetrievalResult(entries=tuple(entries), status=status)


def retrieve(
    video: VideoAssets,
    query: Query,
    config: RetrievalConfig,
    reranker: Reranker,
) -> RetrievalResult:
    """Run the full dual-stream pipeline for one query over one video.

    Visual stream: top k_visual clips by clip-embedding similarity. Aural
    stream: semantic top k_semantic subtitles, extended with lexical word
    matches, re-ranked, truncated to k_aural. The streams are then fused by
    id intersection. Deterministic whenever the reranker is.
    """
    intervals = video.intervals
    for clip in video.clips:
        if clip.clip_id not in video.clip_embeddings:
            raise PipelineStageError("visual", f"unknown id {clip.clip_id}")
        if clip.clip_id not in video.subtitle_embeddings:
            raise PipelineStageError("aural", f"unknown id {clip.clip_id}")

    clip_items = [(c.clip_id, video.clip_embeddings[c.clip_id]) for c in video.clips]
    subtitle_items = [
        (c.clip_id, video.subtitle_embeddings[c.clip_id]) for c in video.clips
    ]
    subtitle_texts = {c.clip_id: c.subtitle_text for c in video.clips}

    try:
        visual_topk = top_k(clip_items, query.visual_embedding, config.k_visual, intervals)
    except ValueError as exc:
        raise PipelineStageError("visual", str(exc)) from exc

    try:
        # Full ranking once: its prefix is the semantic top-K and its scores
        # are the all-subtitles similarity map candidate extension needs.
        full_ranking = aural_semantic_top_k(
            subtitle_items, query.text_embedding, max(len(subtitle_items), 1), intervals
        )
        all_scores = {item.clip_id: item.score for item in full_ranking}
        semantic = full_ranking[: config.k_semantic]
        lexical = lexical_candidates(
            video.clips, query.text, stopwords=config.lexical_stopwords or None
        )
        candidates = extend_candidates(
            semantic, lexical, all_scores, subtitle_texts, intervals
        )
        aural_topk = rerank_candidates(
            candidates,
            query.text,
            reranker,
            config.k_aural,
            reranker_candidate_cap=config.reranker_candidate_cap,
        )
    except PipelineStageError:
        raise
    except ValueError as exc:
        raise PipelineStageError("aural", str(exc)) from exc
    # RerankerTransportError propagates unwrapped so callers can fall back
    # to the identity reranker on transport failures specifically.

    try:
        return fuse(visual_topk, aural_topk, intervals)
    except ValueError as exc:
        raise PipelineStageError("fusion", str(exc)) from exc
