"""Speech-recognition export: video/audio file in, transcript JSON out.

The recognizer is an injectable callable so the exporter is testable
without model weights; the default builds a Whisper pipeline lazily.
Recognizer output is sanitized before writing — the engine rejects
degenerate segments, so the adapter must never emit them.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Callable
from pathlib import Path

from .config import AdapterConfig, AdapterError
from .io import write_atomic_text

logger = logging.getLogger(__name__)

# recognizer: media path -> iterable of {"start": s, "end": s, "text": str}
Recognizer = Callable[[str], list[dict]]


def build_whisper_recognizer(config: AdapterConfig) -> Recognizer:
    """Chunked ASR pipeline with segment timestamps. Needs the 'models'
    extra installed."""
    try:
        from transformers import pipeline
    except ImportError as exc:
        raise AdapterError(
            "transformers not installed; pip install 'lvre-adapters[models]' "
            "or pass a recognizer callable"
        ) from exc

    asr = pipeline(
        "automatic-speech-recognition",
        model=config.speech_model,
        device=config.device,
        return_timestamps=True,
        chunk_length_s=30,
    )

    def recognize(media_path: str) -> list[dict]:
        output = asr(media_path)
        segments = []
        for chunk in output.get("chunks", []):
            start, end = chunk.get("timestamp", (None, None))
            segments.append({"start": start, "end": end, "text": chunk.get("text", "")})
        return segments

    return recognize


def export_transcript(
    media_path: str | Path,
    out_path: str | Path,
    recognizer: Recognizer | None = None,
    config: AdapterConfig | None = None,
    video_id: str | None = None,
) -> int:
    """Run speech recognition and write the transcript wire format.

    Returns the number of segments written. Segments with missing or
    degenerate timestamps are dropped with a warning; a silent input yields
    a valid zero-segment transcript.
    """
    media_path = Path(media_path)
    if not media_path.exists():
        raise AdapterError(f"media file not found: {media_path}")
    config = config or AdapterConfig()
    if recognizer is None:
        recognizer = build_whisper_recognizer(config)
    if video_id is None:
        video_id = media_path.stem

    try:
        raw_segments = recognizer(str(media_path))
    except AdapterError:
        raise
    except Exception as exc:
        raise AdapterError(f"speech recognition failed for {media_path}: {exc}") from exc

    segments = []
    for i, segment in enumerate(raw_segments):
        start, end = segment.get("start"), segment.get("end")
        text = segment.get("text", "")
        if start is None or end is None:
            logger.warning("segment %d has no timestamps; dropped", i)
            continue
        start, end = float(start), float(end)
        if start < 0 or end <= start:
            logger.warning("segment %d has degenerate interval [%s, %s]; dropped",
                           i, start, end)
            continue
        segments.append({"start": start, "end": end, "text": str(text).strip()})

    document = {"video_id": video_id, "segments": segments}
    write_atomic_text(out_path, json.dumps(document, ensure_ascii=True, indent=2) + "\n")
    return len(segments)
