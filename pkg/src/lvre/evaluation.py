"""Recall@K over temporal-overlap thresholds for long-video retrieval.

A predicted interval matches a ground-truth interval when their overlap
exceeds a threshold; Recall@K is the fraction of queries with a match in
their top K predictions, and Average Recall@K is its mean over the
threshold grid 0.50-0.95 (step 0.05). Matching is per query only: a
prediction never matches another query's ground truth.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .timeline import TimeInterval

DEFAULT_THRESHOLDS = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95)
DEFAULT_KS = (1, 5, 10)


class DatasetFormatError(ValueError):
    """Raised when a predictions or ground-truth document is malformed."""


class DatasetJoinError(ValueError):
    """Raised when query ids do not join across predictions and ground truth."""


class OverlapMode(str, Enum):
    # IoU is the default; gt_coverage measures how much of the ground-truth
    # interval the prediction covers, which forgives over-long predictions.
    IOU = "iou"
    GT_COVERAGE = "gt_coverage"


@dataclass(frozen=True)
class GroundTruthEntry:
    video_id: str
    query_id: str
    query_text: str
    interval: TimeInterval


def temporal_overlap(
    pred: TimeInterval, gt: TimeInterval, mode: OverlapMode = OverlapMode.IOU
) -> float:
    """Normalized overlap of two intervals in [0, 1]."""
    intersection = max(0.0, min(pred.end_s, gt.end_s) - max(pred.start_s, gt.start_s))
    if mode is OverlapMode.IOU:
        union = pred.duration + gt.duration - intersection
        return intersection / union
    return intersection / gt.duration


def is_match(
    pred: TimeInterval,
    gt: TimeInterval,
    threshold: float,
    mode: OverlapMode = OverlapMode.IOU,
    strict: bool = True,
) -> bool:
    """True when overlap exceeds the threshold.

    The comparison is strictly greater by default; strict=False switches to
    greater-or-equal, which changes scores for exactly-at-threshold overlaps.
    """
    overlap = temporal_overlap(pred, gt, mode)
    return overlap > threshold if strict else overlap >= threshold


def recall_at_k(
    per_query_predictions: Mapping[str, Sequence[TimeInterval]],
    ground_truth: Mapping[str, TimeInterval],
    k: int,
    threshold: float,
    mode: OverlapMode = OverlapMode.IOU,
    strict: bool = True,
) -> float:
    """Fraction of queries with a matching interval in their top-K.

    Every ground-truth query must appear in the predictions map; callers
    represent retrieval failures as explicit empty lists, which count as
    misses. Queries with fewer than K predictions are scored over what is
    there.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not ground_truth:
        raise ValueError("no ground-truth queries to evaluate")
    missing = sorted(set(ground_truth) - set(per_query_predictions))
    if missing:
        raise DatasetJoinError(f"queries without predictions: {missing}")

    hits = 0
    for query_id, gt_interval in ground_truth.items():
        predictions = per_query_predictions[query_id][:k]
        if any(is_match(p, gt_interval, threshold, mode, strict) for p in predictions):
            hits += 1
    return hits / len(ground_truth)


def average_recall_at_k(
    per_query_predictions: Mapping[str, Sequence[TimeInterval]],
    ground_truth: Mapping[str, TimeInterval],
    k: int,
    mode: OverlapMode = OverlapMode.IOU,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    strict: bool = True,
) -> float:
    """Arithmetic mean of recall_at_k over the threshold grid."""
    if not thresholds:
        raise ValueError("threshold grid is empty")
    recalls = [
        recall_at_k(per_query_predictions, ground_truth, k, t, mode, strict)
        for t in thresholds
    ]
    return sum(recalls) / len(recalls)


@dataclass(frozen=True)
class MetricReport:
    """The full (K x threshold) recall table plus per-K averages."""

    ks: tuple[int, ...]
    thresholds: tuple[float, ...]
    recall: dict[tuple[int, float], float]
    average_recall: dict[int, float]
    queries_evaluated: int
    queries_skipped: int
    mode: OverlapMode
    aggregate: str

    def __post_init__(self):
        # The average must be the mean of the stored cells, computed from
        # them and nothing else.
        for k in self.ks:
            cells = [self.recall[(k, t)] for t in self.thresholds]
            assert self.average_recall[k] == sum(cells) / len(cells)

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "aggregate": self.aggregate,
            "ks": list(self.ks),
            "thresholds": list(self.thresholds),
            "recall": {
                str(k): {str(t): self.recall[(k, t)] for t in self.thresholds}
                for k in self.ks
            },
            "average_recall": {str(k): self.average_recall[k] for k in self.ks},
            "counts": {
                "queries_evaluated": self.queries_evaluated,
                "queries_skipped": self.queries_skipped,
            },
        }

    def curve_rows(self) -> list[tuple[int, float, float]]:
        """(k, threshold, recall) rows for the recall-vs-threshold curves."""
        return [(k, t, self.recall[(k, t)]) for k in self.ks for t in self.thresholds]


def curves_csv(report: MetricReport) -> str:
    lines = ["k,threshold,recall"]
    lines.extend(f"{k},{t},{r}" for k, t, r in report.curve_rows())
    return "\n".join(lines) + "\n"


def parse_ground_truth(raw: bytes | str) -> list[GroundTruthEntry]:
    """Parse the ground-truth wire format.

    Shape: {"videos": [{"video_id": ..., "annotations":
    [{"query_id": ..., "sentence": ..., "segment": [start, end]}]}]}
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"malformed ground-truth document: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("videos"), list):
        raise DatasetFormatError("ground truth must be an object with a 'videos' list")

    entries: list[GroundTruthEntry] = []
    seen: set[str] = set()
    for video in doc["videos"]:
        if not isinstance(video, dict) or "video_id" not in video:
            raise DatasetFormatError("video entry missing 'video_id'")
        video_id = video["video_id"]
        for ann in video.get("annotations", []):
            try:
                query_id = ann["query_id"]
                sentence = ann["sentence"]
                segment = ann["segment"]
                interval = TimeInterval(float(segment[0]), float(segment[1]))
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise DatasetFormatError(
                    f"bad annotation in video {video_id!r}: {exc}"
                ) from exc
            if query_id in seen:
                raise DatasetFormatError(f"duplicate query_id {query_id!r}")
            seen.add(query_id)
            entries.append(
                GroundTruthEntry(
                    video_id=video_id,
                    query_id=query_id,
                    query_text=sentence,
                    interval=interval,
                )
            )
    return entries


def parse_predictions(raw: bytes | str) -> dict[str, list[TimeInterval]]:
    """Parse the predictions wire format into per-query interval lists.

    Shape: {"predictions": [{"video_id": ..., "query_id": ...,
    "results": [{"clip_id": ..., "start": ..., "end": ..., ...}]}]}
    Result order is rank order.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"malformed predictions document: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("predictions"), list):
        raise DatasetFormatError(
            "predictions must be an object with a 'predictions' list"
        )

    by_query: dict[str, list[TimeInterval]] = {}
    for record in doc["predictions"]:
        try:
            query_id = record["query_id"]
            results = record["results"]
            intervals = [TimeInterval(float(r["start"]), float(r["end"])) for r in results]
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"bad prediction record: {exc}") from exc
        if query_id in by_query:
            raise DatasetFormatError(f"duplicate prediction record for {query_id!r}")
        by_query[query_id] = intervals
    return by_query


def evaluate_dataset(
    predictions_path: str | Path,
    ground_truth_path: str | Path,
    ks: Sequence[int] = DEFAULT_KS,
    mode: OverlapMode = OverlapMode.IOU,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    strict: bool = True,
    aggregate: str = "micro",
    on_missing_prediction: str = "error",
) -> MetricReport:
    """Join the two files and fill the full (K x threshold) recall table.

    micro averages over all queries in the set; macro computes recall per
    video first and averages the per-video values. on_missing_prediction
    "skip" drops ground-truth queries that have no prediction record
    (counted in queries_skipped) instead of failing the join; predictions
    for unknown queries are always a join error.
    """
    if aggregate not in ("micro", "macro"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    if on_missing_prediction not in ("error", "skip"):
        raise ValueError(f"unknown on_missing_prediction {on_missing_prediction!r}")
    if not thresholds:
        raise ValueError("threshold grid is empty")

    ground_truth = parse_ground_truth(Path(ground_truth_path).read_bytes())
    predictions = parse_predictions(Path(predictions_path).read_bytes())

    gt_ids = {e.query_id for e in ground_truth}
    unknown = sorted(set(predictions) - gt_ids)
    if unknown:
        raise DatasetJoinError(f"predictions for unknown queries: {unknown}")
    missing = sorted(gt_ids - set(predictions))
    skipped = 0
    if missing:
        if on_missing_prediction == "error":
            raise DatasetJoinError(f"queries without predictions: {missing}")
        skipped = len(missing)
        ground_truth = [e for e in ground_truth if e.query_id not in set(missing)]
    if not ground_truth:
        raise ValueError("no ground-truth queries to evaluate")

    gt_by_query = {e.query_id: e.interval for e in ground_truth}
    videos: dict[str, dict[str, TimeInterval]] = {}
    for entry in ground_truth:
        videos.setdefault(entry.video_id, {})[entry.query_id] = entry.interval

    def cell(k: int, threshold: float) -> float:
        if aggregate == "micro":
            return recall_at_k(predictions, gt_by_query, k, threshold, mode, strict)
        per_video = [
            recall_at_k(predictions, video_gt, k, threshold, mode, strict)
            for video_gt in videos.values()
        ]
        return sum(per_video) / len(per_video)

    recall_table = {(k, t): cell(k, t) for k in ks for t in thresholds}
    averages = {
        k: sum(recall_table[(k, t)] for t in thresholds) / len(thresholds) for k in ks
    }
    return MetricReport(
        ks=tuple(ks),
        thresholds=tuple(thresholds),
        recall=recall_table,
        average_recall=averages,
        queries_evaluated=len(gt_by_query),
        queries_skipped=skipped,
        mode=mode,
        aggregate=aggregate,
    )
