"""Command-line entry points for the three adapters."""

from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig, AdapterError
from .embed_export import (
    build_text_encoder,
    export_embeddings,
    load_manifest_items,
    load_query_items,
    resolve_encoder,
)
from .rerank_server import serve_rerank
from .transcribe import export_transcript


def _config_from(args) -> AdapterConfig:
    overrides = {}
    for name in ("speech_model", "text_encoder_model", "reranker_model",
                 "batch_size", "device"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return AdapterConfig(**overrides)


def main_export_transcript(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lvre-export-transcript",
        description="Transcribe a media file into the transcript wire format.",
    )
    parser.add_argument("media")
    parser.add_argument("--out", required=True)
    parser.add_argument("--video-id", help="defaults to the media file stem")
    parser.add_argument("--speech-model", dest="speech_model")
    parser.add_argument("--device")
    args = parser.parse_args(argv)
    try:
        count = export_transcript(
            args.media, args.out, config=_config_from(args), video_id=args.video_id
        )
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} segments to {args.out}", file=sys.stderr)
    return 0


def main_export_embeddings(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lvre-export-embeddings",
        description="Encode a clip manifest or queries file into a binary "
        "embedding store.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--manifest", help="clip manifest from 'lvre segment'")
    source.add_argument("--queries", help="queries file (query_id + text)")
    parser.add_argument("--out", required=True)
    parser.add_argument(
        "--encoder",
        default="text",
        help="'text' for the built-in sentence encoder, or module:callable",
    )
    parser.add_argument("--text-encoder-model", dest="text_encoder_model")
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--device")
    args = parser.parse_args(argv)
    config = _config_from(args)
    try:
        if args.encoder == "text":
            encoder = build_text_encoder(config)
            payload = "text"
        else:
            encoder = resolve_encoder(args.encoder)
            payload = "clip"
        if args.manifest:
            items = load_manifest_items(args.manifest, payload=payload)
        else:
            items = load_query_items(args.queries)
        count, dim = export_embeddings(
            items, encoder, args.out, batch_size=config.batch_size
        )
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} vectors (dim {dim}) to {args.out}", file=sys.stderr)
    return 0


def main_serve_rerank(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lvre-serve-rerank",
        description="Serve the rerank protocol over a hosted LLM.",
    )
    parser.add_argument("--port", type=int, default=8091)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--reranker-model", dest="reranker_model")
    args = parser.parse_args(argv)
    try:
        server = serve_rerank(args.port, config=_config_from(args), host=args.host)
    except AdapterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"rerank shim listening on {args.host}:{args.port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
    return 0
