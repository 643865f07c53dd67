"""Time intervals, subtitle segments, clips, and subtitle-based segmentation.

All timestamps are seconds as 64-bit floats. Segmentation guarantees that
clips and subtitle segments share identical intervals, which is what lets
the visual and aural retrieval streams be intersected by clip id later on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


class TranscriptFormatError(ValueError):
    """Raised when a transcript document violates the wire format."""


@dataclass(frozen=True, order=True)
class TimeInterval:
    """A [start, end] span in seconds with strictly positive duration."""

    start_s: float
    end_s: float

    def __post_init__(self):
        if self.start_s < 0:
            raise ValueError(f"negative start timestamp: {self.start_s}")
        if self.end_s <= self.start_s:
            raise ValueError(
                f"degenerate interval: end {self.end_s} <= start {self.start_s}"
            )

    @property
    def duration(self) -> float:
        return self.end_s - self.start_s


@dataclass(frozen=True)
class SubtitleSegment:
    """One recognized speech segment: an interval plus its (trimmed) text."""

    interval: TimeInterval
    text: str

    def __post_init__(self):
        object.__setattr__(self, "text", self.text.strip())


@dataclass(frozen=True)
class Clip:
    """A video slice produced by segmentation; mirrors one subtitle segment."""

    clip_id: str
    video_id: str
    interval: TimeInterval
    subtitle_text: str


@dataclass(frozen=True)
class Transcript:
    """Ordered subtitle segments for one video, sorted by start time."""

    video_id: str
    segments: tuple[SubtitleSegment, ...] = field(default=())

    def __post_init__(self):
        # Stable sort: segments with equal starts keep their input order.
        ordered = tuple(sorted(self.segments, key=lambda s: s.interval.start_s))
        object.__setattr__(self, "segments", ordered)


def parse_transcript(raw: bytes | str) -> Transcript:
    """Parse a transcript JSON document into a validated Transcript.

    Expected shape:
        {"video_id": "...", "segments": [{"start": s, "end": s, "text": "..."}]}

    Degenerate segments (end <= start) are rejected, not clamped, so errors
    surface at ingestion instead of skewing the downstream interval sets.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise TranscriptFormatError(f"malformed transcript document: {exc}") from exc
    if not isinstance(doc, dict):
        raise TranscriptFormatError("transcript document must be a JSON object")

    video_id = doc.get("video_id")
    if not isinstance(video_id, str) or not video_id:
        raise TranscriptFormatError("missing required field 'video_id'")
    raw_segments = doc.get("segments")
    if not isinstance(raw_segments, list):
        raise TranscriptFormatError("missing required field 'segments'")

    segments = []
    for i, entry in enumerate(raw_segments):
        if not isinstance(entry, dict):
            raise TranscriptFormatError(f"segment {i}: not an object")
        for key in ("start", "end", "text"):
            if key not in entry:
                raise TranscriptFormatError(f"segment {i}: missing required field '{key}'")
        start, end, text = entry["start"], entry["end"], entry["text"]
        if not isinstance(start, (int, float)) or isinstance(start, bool):
            raise TranscriptFormatError(f"segment {i}: 'start' must be a number")
        if not isinstance(end, (int, float)) or isinstance(end, bool):
            raise TranscriptFormatError(f"segment {i}: 'end' must be a number")
        if not isinstance(text, str):
            raise TranscriptFormatError(f"segment {i}: 'text' must be a string")
        try:
            interval = TimeInterval(float(start), float(end))
        except ValueError as exc:
            raise TranscriptFormatError(f"segment {i}: {exc}") from exc
        segments.append(SubtitleSegment(interval=interval, text=text))

    return Transcript(video_id=video_id, segments=tuple(segments))


def serialize_transcript(transcript: Transcript) -> str:
    """Serialize a Transcript back to its JSON wire format."""
    doc = {
        "video_id": transcript.video_id,
        "segments": [
            {"start": s.interval.start_s, "end": s.interval.end_s, "text": s.text}
            for s in transcript.segments
        ],
    }
    return json.dumps(doc, ensure_ascii=True, sort_keys=True)


def segment_video(transcript: Transcript) -> list[Clip]:
    """Cut a video into clips, one per subtitle segment, same order.

    Clip ids are "<video_id>:<zero-based index>". Segments with empty text
    are kept: they carry no lexical signal but can still match visually.
    """
    return [
        Clip(
            clip_id=f"{transcript.video_id}:{i}",
            video_id=transcript.video_id,
            interval=segment.interval,
            subtitle_text=segment.text,
        )
        for i, segment in enumerate(transcript.segments)
    ]
