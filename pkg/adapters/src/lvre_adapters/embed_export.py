"""Embedding export: encode texts or clip references, write a binary store.

The encoder is an injectable callable (a batch of payloads in, a 2-D array
out); builders for real backends import lazily. Failed items are reported
by id and nothing is written on failure.
"""

from __future__ import annotations

import importlib
import json
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np

from .config import AdapterConfig, AdapterError
from .io import write_store

# encoder: batch of payloads -> array of shape (len(batch), dim)
Encoder = Callable[[Sequence], np.ndarray]


def build_text_encoder(config: AdapterConfig) -> Encoder:
    """Sentence-embedding backend. Needs the 'models' extra installed."""
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:
        raise AdapterError(
            "sentence-transformers not installed; pip install "
            "'lvre-adapters[models]' or pass an encoder callable"
        ) from exc
    model = SentenceTransformer(config.text_encoder_model, device=config.device)

    def encode(batch: Sequence) -> np.ndarray:
        return np.asarray(model.encode(list(batch), convert_to_numpy=True))

    return encode


def resolve_encoder(dotted_path: str) -> Encoder:
    """Load an encoder callable from "module:attribute" — the hook for
    video CLIP backends, whose preprocessing is model-specific."""
    module_name, sep, attr = dotted_path.partition(":")
    if not sep:
        raise AdapterError(f"encoder path must look like module:callable, got {dotted_path!r}")
    try:
        module = importlib.import_module(module_name)
        encoder = getattr(module, attr)
    except (ImportError, AttributeError) as exc:
        raise AdapterError(f"cannot load encoder {dotted_path!r}: {exc}") from exc
    if not callable(encoder):
        raise AdapterError(f"{dotted_path!r} is not callable")
    return encoder


def load_manifest_items(
    manifest_path: str | Path, payload: str = "text"
) -> list[tuple[str, object]]:
    """Items from a clip manifest. payload="text" pairs each clip id with
    its subtitle text (for text encoders); payload="clip" pairs it with the
    full clip record (for video encoders, which need the interval).
    """
    try:
        doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AdapterError(f"cannot read manifest {manifest_path}: {exc}") from exc
    clips = doc.get("clips")
    if not isinstance(clips, list):
        raise AdapterError(f"manifest {manifest_path} has no 'clips' list")
    items = []
    for clip in clips:
        try:
            clip_id = clip["clip_id"]
            value = clip["subtitle_text"] if payload == "text" else dict(clip)
        except (KeyError, TypeError) as exc:
            raise AdapterError(f"bad clip record in {manifest_path}: {exc}") from exc
        items.append((clip_id, value))
    return items


def load_query_items(queries_path: str | Path) -> list[tuple[str, str]]:
    """(query_id, text) items from the engine's queries file."""
    try:
        doc = json.loads(Path(queries_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise AdapterError(f"cannot read queries {queries_path}: {exc}") from exc
    queries = doc.get("queries")
    if not isinstance(queries, list):
        raise AdapterError(f"queries {queries_path} has no 'queries' list")
    try:
        return [(q["query_id"], q["text"]) for q in queries]
    except (KeyError, TypeError) as exc:
        raise AdapterError(f"bad query record in {queries_path}: {exc}") from exc


def export_embeddings(
    items: Sequence[tuple[str, object]],
    encoder: Encoder,
    out_path: str | Path,
    batch_size: int = 16,
) -> tuple[int, int]:
    """Encode every item and write one store; returns (count, dim).

    Encoder failures are re-probed item by item so the error names the
    offending ids. The store appears only if every item encoded.
    """
    if batch_size < 1:
        raise AdapterError(f"batch_size must be >= 1, got {batch_size}")
    if not items:
        raise AdapterError("no items to encode")
    ids = [item_id for item_id, _ in items]
    if len(ids) != len(set(ids)):
        raise AdapterError("duplicate item ids")

    vectors: list[np.ndarray] = []
    for offset in range(0, len(items), batch_size):
        batch = items[offset : offset + batch_size]
        try:
            encoded = np.asarray(encoder([payload for _, payload in batch]))
        except Exception:
            failures = []
            for item_id, payload in batch:
                try:
                    encoder([payload])
                except Exception as exc:
                    failures.append(f"{item_id}: {exc}")
            raise AdapterError(
                "encoder failed for " + "; ".join(failures or ["unknown items"])
            ) from None
        if encoded.ndim != 2 or encoded.shape[0] != len(batch):
            raise AdapterError(
                f"encoder returned shape {encoded.shape} for a batch of {len(batch)}"
            )
        vectors.extend(encoded)

    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise AdapterError(f"encoder output dimensions vary: {sorted(dims)}")
    dim = dims.pop()
    write_store(out_path, dim, list(zip(ids, vectors)))
    return len(ids), int(dim)
