"""Model adapters for the long-video retrieval engine.

One-shot exporters plus a stateless HTTP shim: transcripts from a speech
recognizer, binary embedding stores from text/video encoders, and a rerank
endpoint backed by an LLM with server-side output repair. Everything speaks
the engine's wire formats and nothing else.
"""

from .config import AdapterConfig, AdapterError
from .embed_export import (
    export_embeddings,
    load_manifest_items,
    load_query_items,
    resolve_encoder,
)
from .rerank_server import render_prompt, repair_ranking, serve_rerank
from .transcribe import export_transcript

__version__ = "0.1.0"
