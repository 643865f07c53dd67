"""Moment retrieval engine and evaluation harness for long audible videos.

Segments a video at subtitle timestamps, retrieves moments through
independent visual and aural similarity streams (with lexical candidate
expansion and pluggable re-ranking on the aural side), fuses the streams by
timestamp-interval intersection, and scores results with Recall@K averaged
over a temporal-overlap threshold grid.
"""

from .aural import (
    CandidateEntry,
    CandidateOrigin,
    CandidateSet,
    IdentityReranker,
    Reranker,
    RerankerTransportError,
    aural_semantic_top_k,
    extend_candidates,
    lexical_candidates,
    rerank_candidates,
    tokenize,
)
from .embedding import EmbeddingVector, ScoredItem, cosine_similarity, top_k
from .evaluation import (
    DEFAULT_KS,
    DEFAULT_THRESHOLDS,
    GroundTruthEntry,
    MetricReport,
    OverlapMode,
    average_recall_at_k,
    evaluate_dataset,
    is_match,
    recall_at_k,
    temporal_overlap,
)
from .fusion import (
    PipelineStageError,
    Query,
    RetrievalConfig,
    RetrievalEntry,
    RetrievalResult,
    RetrievalStatus,
    VideoAssets,
    fuse,
    retrieve,
)
from .providers import (
    EmbeddingProvider,
    EmbeddingServiceError,
    EmbeddingStore,
    HttpEmbeddingProvider,
    HttpReranker,
    MockEmbeddingProvider,
    StoreBackedProvider,
    StoreFormatError,
    load_store,
    merge_stores,
    mock_provider,
    save_store,
)
from .timeline import (
    Clip,
    SubtitleSegment,
    TimeInterval,
    Transcript,
    TranscriptFormatError,
    parse_transcript,
    segment_video,
    serialize_transcript,
)

__version__ = "0.1.0"
