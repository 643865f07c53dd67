"""Batch command-line surface: segment, retrieve, evaluate, pipeline.

All machine-readable output goes to files, written atomically (temp file
then rename) so failed runs never leave partial artifacts. Diagnostics go
to standard error; exit code 0 means no error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .aural import IdentityReranker, Reranker, RerankerTransportError
from .config import ConfigError, RunConfig, load_config
from .evaluation import (
    DatasetFormatError,
    DatasetJoinError,
    MetricReport,
    curves_csv,
    evaluate_dataset,
)
from .fusion import (
    PipelineStageError,
    Query,
    RetrievalConfig,
    RetrievalResult,
    VideoAssets,
    retrieve,
)
from .providers import (
    EmbeddingProvider,
    EmbeddingServiceError,
    HttpReranker,
    StoreBackedProvider,
    StoreFormatError,
    merge_stores,
    mock_provider,
)
from .timeline import Clip, TranscriptFormatError, parse_transcript, segment_video


class CliError(RuntimeError):
    """A user-facing failure: printed to stderr, nonzero exit."""


@dataclass(frozen=True)
class QuerySpec:
    query_id: str
    video_id: str
    text: str


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def _write_atomic(path: str | Path, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _load_transcripts(paths: Sequence[str]) -> dict[str, list[Clip]]:
    clips_by_video: dict[str, list[Clip]] = {}
    for path in paths:
        try:
            transcript = parse_transcript(Path(path).read_bytes())
        except OSError as exc:
            raise CliError(f"cannot read transcript {path}: {exc}") from exc
        except TranscriptFormatError as exc:
            raise CliError(f"transcript {path}: {exc}") from exc
        if transcript.video_id in clips_by_video:
            raise CliError(f"duplicate video_id {transcript.video_id!r} across transcripts")
        clips_by_video[transcript.video_id] = segment_video(transcript)
    return clips_by_video


def _load_queries(path: str) -> list[QuerySpec]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CliError(f"cannot read queries {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"queries {path}: malformed JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("queries"), list):
        raise CliError(f"queries {path}: expected an object with a 'queries' list")
    specs = []
    seen = set()
    for entry in doc["queries"]:
        try:
            spec = QuerySpec(
                query_id=entry["query_id"],
                video_id=entry["video_id"],
                text=entry["text"],
            )
        except (KeyError, TypeError) as exc:
            raise CliError(f"queries {path}: bad query entry: {exc}") from exc
        if spec.query_id in seen:
            raise CliError(f"queries {path}: duplicate query_id {spec.query_id!r}")
        seen.add(spec.query_id)
        specs.append(spec)
    return specs


def _queries_from_ground_truth(path: str) -> list[QuerySpec]:
    from .evaluation import parse_ground_truth

    try:
        entries = parse_ground_truth(Path(path).read_bytes())
    except OSError as exc:
        raise CliError(f"cannot read ground truth {path}: {exc}") from exc
    except DatasetFormatError as exc:
        raise CliError(f"ground truth {path}: {exc}") from exc
    return [
        QuerySpec(query_id=e.query_id, video_id=e.video_id, text=e.query_text)
        for e in entries
    ]


def _build_providers(cfg: RunConfig) -> tuple[EmbeddingProvider, EmbeddingProvider]:
    """(visual, text) providers per config. Mock providers use distinct
    seeds per modality so the two streams rank differently."""
    if cfg.provider == "mock":
        return (
            mock_provider(cfg.seed, cfg.mock_dim),
            mock_provider(cfg.seed + 1, cfg.mock_dim),
        )
    if cfg.provider == "store":
        if not cfg.visual_store_paths or not cfg.text_store_paths:
            raise CliError("provider 'store' requires visual_store_paths and text_store_paths")
        try:
            visual = StoreBackedProvider(merge_stores(cfg.visual_store_paths))
            text = StoreBackedProvider(merge_stores(cfg.text_store_paths))
        except (OSError, StoreFormatError) as exc:
            raise CliError(f"cannot load embedding store: {exc}") from exc
        return visual, text
    if not cfg.visual_endpoint or not cfg.text_endpoint:
        raise CliError("provider 'http' requires visual_endpoint and text_endpoint")
    from .providers import http_provider

    common = dict(
        timeout=cfg.http_timeout_s,
        retries=cfg.http_retries,
        bearer_token=cfg.bearer_token or None,
    )
    return http_provider(cfg.visual_endpoint, **common), http_provider(
        cfg.text_endpoint, **common
    )


def _build_reranker(cfg: RunConfig) -> Reranker:
    if cfg.reranker == "identity":
        return IdentityReranker()
    return HttpReranker(
        cfg.reranker_endpoint,
        timeout=cfg.http_timeout_s,
        retries=cfg.http_retries,
        bearer_token=cfg.bearer_token or None,
    )


def _video_assets(
    cfg: RunConfig,
    clips: list[Clip],
    visual_provider: EmbeddingProvider,
    text_provider: EmbeddingProvider,
) -> VideoAssets:
    ids = [c.clip_id for c in clips]
    try:
        visual_vectors = visual_provider.embed_clips(ids)
    except (ValueError, EmbeddingServiceError) as exc:
        raise CliError(f"visual: {exc}") from exc
    try:
        if cfg.provider == "store":
            # Store files key subtitle vectors by clip id.
            text_vectors = text_provider.embed_clips(ids)
        else:
            text_vectors = text_provider.embed_texts([c.subtitle_text for c in clips])
    except (ValueError, EmbeddingServiceError) as exc:
        raise CliError(f"aural: {exc}") from exc
    return VideoAssets(
        clips=tuple(clips),
        clip_embeddings=dict(zip(ids, visual_vectors)),
        subtitle_embeddings=dict(zip(ids, text_vectors)),
    )


def _query_embeddings(
    cfg: RunConfig,
    spec: QuerySpec,
    visual_provider: EmbeddingProvider,
    text_provider: EmbeddingProvider,
) -> Query:
    try:
        if cfg.provider == "store":
            # Query vectors live in the same stores, keyed by query id.
            visual = visual_provider.embed_clips([spec.query_id])[0]
            text = text_provider.embed_clips([spec.query_id])[0]
        else:
            visual = visual_provider.embed_texts([spec.text])[0]
            text = text_provider.embed_texts([spec.text])[0]
    except (ValueError, EmbeddingServiceError) as exc:
        raise CliError(f"query {spec.query_id}: {exc}") from exc
    return Query(text=spec.text, visual_embedding=visual, text_embedding=text)


def _run_retrieval(
    cfg: RunConfig,
    clips_by_video: dict[str, list[Clip]],
    queries: list[QuerySpec],
) -> list[dict]:
    unknown_videos = sorted({q.video_id for q in queries} - set(clips_by_video))
    if unknown_videos:
        raise CliError(f"queries reference videos without transcripts: {unknown_videos}")

    visual_provider, text_provider = _build_providers(cfg)
    reranker = _build_reranker(cfg)
    retrieval_config = RetrievalConfig(
        k_visual=cfg.k_visual,
        k_semantic=cfg.k_semantic,
        k_aural=cfg.k_aural,
        reranker_candidate_cap=cfg.reranker_candidate_cap,
        lexical_stopwords=frozenset(cfg.lexical_stopwords),
    )
    assets = {
        video_id: _video_assets(cfg, clips, visual_provider, text_provider)
        for video_id, clips in clips_by_video.items()
        if video_id in {q.video_id for q in queries}
    }

    def run_one(spec: QuerySpec) -> RetrievalResult:
        query = _query_embeddings(cfg, spec, visual_provider, text_provider)
        try:
            return retrieve(assets[spec.video_id], query, retrieval_config, reranker)
        except RerankerTransportError as exc:
            if not cfg.reranker_fallback:
                raise CliError(f"aural: reranker failed: {exc}") from exc
            print(
                f"warning: reranker failed for {spec.query_id} ({exc}); "
                "falling back to identity order",
                file=sys.stderr,
            )
            return retrieve(assets[spec.video_id], query, retrieval_config, IdentityReranker())
        except PipelineStageError as exc:
            raise CliError(f"query {spec.query_id}: {exc}") from exc

    # Bounded pool; map() keeps results in input order regardless of
    # completion order.
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = list(pool.map(run_one, queries))

    records = []
    for spec, result in zip(queries, results):
        records.append(
            {
                "video_id": spec.video_id,
                "query_id": spec.query_id,
                "status": result.status.value,
                "results": [
                    {
                        "clip_id": e.clip_id,
                        "start": e.interval.start_s,
                        "end": e.interval.end_s,
                        "fused_score": e.fused_score,
                        "visual_score": e.visual_score,
                        "aural_score": e.aural_score,
                    }
                    for e in result.entries
                ],
            }
        )
    return records


def _manifest_for(video_id: str, clips: list[Clip]) -> dict:
    return {
        "video_id": video_id,
        "clips": [
            {
                "clip_id": c.clip_id,
                "start": c.interval.start_s,
                "end": c.interval.end_s,
                "subtitle_text": c.subtitle_text,
            }
            for c in clips
        ],
    }


def _report_files(report: MetricReport, out_path: str, curves_path: str | None) -> None:
    _write_atomic(out_path, _dump_json(report.to_json_dict()))
    if curves_path is None:
        curves_path = str(Path(out_path).with_suffix(".csv"))
    _write_atomic(curves_path, curves_csv(report))


def _apply_set_overrides(cfg: RunConfig, pairs: Sequence[str]) -> RunConfig:
    """Apply generic --set KEY=VALUE overrides; values parse as JSON when
    possible, else as raw strings. Lists become tuples."""
    from dataclasses import fields

    known = {f.name for f in fields(RunConfig)}
    overrides = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise CliError(f"--set expects KEY=VALUE, got {pair!r}")
        if key not in known:
            raise CliError(f"--set: unknown config key {key!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        if isinstance(value, list):
            value = tuple(value)
        overrides[key] = value
    try:
        return cfg.with_overrides(**overrides)
    except TypeError as exc:
        raise CliError(f"--set: bad value: {exc}") from exc


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if getattr(args, "overrides", None):
        cfg = _apply_set_overrides(cfg, args.overrides)
    thresholds = None
    if getattr(args, "thresholds", None):
        thresholds = tuple(float(t) for t in args.thresholds.split(","))
    return cfg.with_overrides(
        k_visual=getattr(args, "k_visual", None),
        k_semantic=getattr(args, "k_semantic", None),
        k_aural=getattr(args, "k_aural", None),
        overlap_mode=getattr(args, "mode", None),
        thresholds=thresholds,
        reranker=getattr(args, "reranker", None),
        seed=getattr(args, "seed", None),
        aggregate=getattr(args, "aggregate", None),
        match_comparison=getattr(args, "match", None),
        workers=getattr(args, "workers", None),
    )


def cmd_segment(args) -> int:
    try:
        transcript = parse_transcript(Path(args.transcript).read_bytes())
    except OSError as exc:
        raise CliError(f"cannot read transcript {args.transcript}: {exc}") from exc
    except TranscriptFormatError as exc:
        raise CliError(str(exc)) from exc
    clips = segment_video(transcript)
    _write_atomic(args.out, _dump_json(_manifest_for(transcript.video_id, clips)))
    print(f"wrote {len(clips)} clips to {args.out}", file=sys.stderr)
    return 0


def cmd_retrieve(args) -> int:
    cfg = _config_from_args(args)
    clips_by_video = _load_transcripts(args.transcript)
    queries = _load_queries(args.queries)
    records = _run_retrieval(cfg, clips_by_video, queries)
    _write_atomic(args.out, _dump_json({"predictions": records}))
    print(f"wrote {len(records)} prediction records to {args.out}", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    cfg = _config_from_args(args)
    try:
        report = evaluate_dataset(
            args.predictions,
            args.ground_truth,
            ks=cfg.ks,
            mode=cfg.mode,
            thresholds=cfg.thresholds,
            strict=cfg.strict_match,
            aggregate=cfg.aggregate,
        )
    except OSError as exc:
        raise CliError(f"cannot read input: {exc}") from exc
    except (DatasetFormatError, DatasetJoinError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    _report_files(report, args.out, args.curves_out)
    for k in report.ks:
        print(f"average recall@{k}: {report.average_recall[k]:.4f}", file=sys.stderr)
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config_from_args(args)
    out_dir = Path(args.out_dir)
    clips_by_video = _load_transcripts(args.transcript)
    queries = _queries_from_ground_truth(args.ground_truth)

    manifest = {
        "videos": [_manifest_for(vid, clips) for vid, clips in clips_by_video.items()]
    }
    _write_atomic(out_dir / "clips.json", _dump_json(manifest))

    records = _run_retrieval(cfg, clips_by_video, queries)
    predictions_path = out_dir / "predictions.json"
    _write_atomic(predictions_path, _dump_json({"predictions": records}))

    try:
        report = evaluate_dataset(
            predictions_path,
            args.ground_truth,
            ks=cfg.ks,
            mode=cfg.mode,
            thresholds=cfg.thresholds,
            strict=cfg.strict_match,
            aggregate=cfg.aggregate,
        )
    except (DatasetFormatError, DatasetJoinError, ValueError) as exc:
        raise CliError(str(exc)) from exc
    _report_files(report, str(out_dir / "report.json"), str(out_dir / "curves.csv"))
    for k in report.ks:
        print(f"average recall@{k}: {report.average_recall[k]:.4f}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvre",
        description="Moment retrieval over long audible videos: segment by "
        "subtitles, retrieve with dual visual/aural streams, evaluate with "
        "threshold-averaged Recall@K.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, retrieval=False, evaluation=False):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument(
            "--set",
            action="append",
            dest="overrides",
            metavar="KEY=VALUE",
            help="override any config field; repeatable",
        )
        if retrieval:
            p.add_argument("--k-visual", dest="k_visual", type=int)
            p.add_argument("--k-semantic", dest="k_semantic", type=int)
            p.add_argument("--k-aural", dest="k_aural", type=int)
            p.add_argument("--reranker", choices=["identity", "http"])
            p.add_argument("--seed", type=int)
            p.add_argument("--workers", type=int)
        if evaluation:
            p.add_argument("--mode", choices=["iou", "gt_coverage"])
            p.add_argument("--thresholds", help="comma-separated grid, e.g. 0.5,0.75,0.9")
            p.add_argument("--aggregate", choices=["micro", "macro"])
            p.add_argument("--match", choices=["strict-greater", "greater-equal"])

    p_segment = sub.add_parser("segment", help="cut a transcript into a clip manifest")
    p_segment.add_argument("transcript")
    p_segment.add_argument("--out", required=True)
    p_segment.set_defaults(func=cmd_segment)

    p_retrieve = sub.add_parser("retrieve", help="run dual-stream retrieval for queries")
    p_retrieve.add_argument("--transcript", action="append", required=True)
    p_retrieve.add_argument("--queries", required=True)
    p_retrieve.add_argument("--out", required=True)
    add_common(p_retrieve, retrieval=True)
    p_retrieve.set_defaults(func=cmd_retrieve)

    p_evaluate = sub.add_parser("evaluate", help="score predictions against ground truth")
    p_evaluate.add_argument("predictions")
    p_evaluate.add_argument("ground_truth")
    p_evaluate.add_argument("--out", required=True)
    p_evaluate.add_argument("--curves-out", dest="curves_out")
    add_common(p_evaluate, evaluation=True)
    p_evaluate.set_defaults(func=cmd_evaluate)

    p_pipeline = sub.add_parser(
        "pipeline", help="segment, retrieve, and evaluate in one run"
    )
    p_pipeline.add_argument("--transcript", action="append", required=True)
    p_pipeline.add_argument("--ground-truth", dest="ground_truth", required=True)
    p_pipeline.add_argument("--out-dir", dest="out_dir", required=True)
    add_common(p_pipeline, retrieval=True, evaluation=True)
    p_pipeline.set_defaults(func=cmd_pipeline)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
