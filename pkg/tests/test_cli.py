"""Tests for the command-line surface: segment, retrieve, evaluate, pipeline."""

import json
from pathlib import Path

import pytest

from lvre.cli import main

FIXTURES = Path(__file__).parent / "fixtures" / "golden_5clips"
GOLDEN = Path(__file__).parent / "golden" / "golden_5clips"


def run(args):
    return main([str(a) for a in args])


class TestSegment:
    def test_writes_manifest(self, tmp_path):
        out = tmp_path / "clips.json"
        assert run(["segment", FIXTURES / "transcript.json", "--out", out]) == 0
        manifest = json.loads(out.read_text())
        assert manifest["video_id"] == "demo-video"
        assert len(manifest["clips"]) == 5
        assert manifest["clips"][3] == {
            "clip_id": "demo-video:3",
            "start": 114.0,
            "end": 121.0,
            "subtitle_text": "add the squid into the hot oil",
        }

    def test_malformed_transcript_names_segment(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({
            "video_id": "v",
            "segments": [
                {"start": 0.0, "end": 1.0, "text": "ok"},
                {"start": 5.0, "end": 5.0, "text": "bad"},
            ],
        }))
        out = tmp_path / "clips.json"
        assert run(["segment", bad, "--out", out]) == 1
        err = capsys.readouterr().err
        assert "segment 1" in err
        assert not out.exists()  # no partial output

    def test_missing_file(self, tmp_path, capsys):
        assert run(["segment", tmp_path / "nope.json", "--out", tmp_path / "o"]) == 1
        assert "cannot read transcript" in capsys.readouterr().err

    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            run(["segment", "--help"])
        assert excinfo.value.code == 0
        assert "usage" in capsys.readouterr().out


class TestRetrieve:
    def test_golden_predictions_byte_identical(self, tmp_path):
        out1 = tmp_path / "p1.json"
        out2 = tmp_path / "p2.json"
        for out in (out1, out2):
            code = run([
                "retrieve",
                "--config", FIXTURES / "config.json",
                "--transcript", FIXTURES / "transcript.json",
                "--queries", FIXTURES / "queries.json",
                "--out", out,
            ])
            assert code == 0
        assert out1.read_bytes() == out2.read_bytes()
        assert out1.read_bytes() == (GOLDEN / "predictions.json").read_bytes()

    def test_empty_queries_file(self, tmp_path):
        queries = tmp_path / "queries.json"
        queries.write_text(json.dumps({"queries": []}))
        out = tmp_path / "predictions.json"
        code = run([
            "retrieve",
            "--config", FIXTURES / "config.json",
            "--transcript", FIXTURES / "transcript.json",
            "--queries", queries,
            "--out", out,
        ])
        assert code == 0
        assert json.loads(out.read_text()) == {"predictions": []}

    def test_query_for_unknown_video(self, tmp_path, capsys):
        queries = tmp_path / "queries.json"
        queries.write_text(json.dumps({
            "queries": [{"query_id": "q", "video_id": "ghost", "text": "x"}]
        }))
        code = run([
            "retrieve",
            "--config", FIXTURES / "config.json",
            "--transcript", FIXTURES / "transcript.json",
            "--queries", queries,
            "--out", tmp_path / "out.json",
        ])
        assert code == 1
        assert "ghost" in capsys.readouterr().err

    def test_missing_clip_embedding_stage_labelled(self, tmp_path, capsys):
        # store-backed run with a visual store that lacks one clip id
        import numpy as np

        from lvre.providers import EmbeddingStore, save_store

        ids = [f"demo-video:{i}" for i in range(5)]
        query_ids = ["q1", "q2", "q3"]
        rng = np.random.default_rng(1)
        full = {k: rng.standard_normal(8).astype(np.float32) for k in ids + query_ids}
        partial = {k: v for k, v in full.items() if k != "demo-video:2"}
        visual_path = tmp_path / "visual.lvre"
        text_path = tmp_path / "text.lvre"
        save_store(EmbeddingStore(8, partial), visual_path)
        save_store(EmbeddingStore(8, full), text_path)
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "provider": "store",
            "visual_store_paths": [str(visual_path)],
            "text_store_paths": [str(text_path)],
        }))
        code = run([
            "retrieve",
            "--config", config,
            "--transcript", FIXTURES / "transcript.json",
            "--queries", FIXTURES / "queries.json",
            "--out", tmp_path / "out.json",
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert "visual: unknown id demo-video:2" in err
        assert not (tmp_path / "out.json").exists()

    def test_set_overrides_any_config_field(self, tmp_path):
        out = tmp_path / "predictions.json"
        code = run([
            "retrieve",
            "--config", FIXTURES / "config.json",
            "--transcript", FIXTURES / "transcript.json",
            "--queries", FIXTURES / "queries.json",
            "--out", out,
            "--set", "mock_dim=16",
            "--set", 'lexical_stopwords=["the","a"]',
        ])
        assert code == 0
        # different mock dimension changes every score
        assert out.read_bytes() != (GOLDEN / "predictions.json").read_bytes()

    def test_set_rejects_unknown_key(self, tmp_path, capsys):
        code = run([
            "retrieve",
            "--config", FIXTURES / "config.json",
            "--transcript", FIXTURES / "transcript.json",
            "--queries", FIXTURES / "queries.json",
            "--out", tmp_path / "out.json",
            "--set", "bogus=1",
        ])
        assert code == 1
        assert "unknown config key" in capsys.readouterr().err

    def test_flag_overrides_config(self, tmp_path):
        # k so small that fused output shrinks: k=1 per stream can keep at
        # most one entry per query
        out = tmp_path / "predictions.json"
        code = run([
            "retrieve",
            "--config", FIXTURES / "config.json",
            "--transcript", FIXTURES / "transcript.json",
            "--queries", FIXTURES / "queries.json",
            "--out", out,
            "--k-visual", "1", "--k-aural", "1",
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert all(len(r["results"]) <= 1 for r in doc["predictions"])


class TestEvaluate:
    def test_golden_report(self, tmp_path):
        out = tmp_path / "report.json"
        curves = tmp_path / "curves.csv"
        code = run([
            "evaluate",
            GOLDEN / "predictions.json",
            FIXTURES / "ground_truth.json",
            "--out", out,
            "--curves-out", curves,
        ])
        assert code == 0
        assert out.read_bytes() == (GOLDEN / "report.json").read_bytes()
        assert curves.read_bytes() == (GOLDEN / "curves.csv").read_bytes()

    def test_csv_row_count(self, tmp_path):
        curves = tmp_path / "curves.csv"
        run([
            "evaluate",
            GOLDEN / "predictions.json",
            FIXTURES / "ground_truth.json",
            "--out", tmp_path / "report.json",
            "--curves-out", curves,
        ])
        rows = curves.read_text().strip().splitlines()
        assert len(rows) == 1 + 3 * 10  # header + |ks| * |grid|

    def test_custom_thresholds_flag(self, tmp_path):
        out = tmp_path / "report.json"
        code = run([
            "evaluate",
            GOLDEN / "predictions.json",
            FIXTURES / "ground_truth.json",
            "--out", out,
            "--thresholds", "0.3,0.6,0.9",
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["thresholds"] == [0.3, 0.6, 0.9]

    def test_gt_coverage_mode_flag(self, tmp_path):
        out_iou = tmp_path / "iou.json"
        out_cov = tmp_path / "cov.json"
        # asymmetric fixture: prediction [0, 30] over ground truth [10, 20]
        gt = tmp_path / "gt.json"
        gt.write_text(json.dumps({"videos": [{"video_id": "v", "annotations": [
            {"query_id": "q", "sentence": "s", "segment": [10, 20]},
        ]}]}))
        preds = tmp_path / "preds.json"
        preds.write_text(json.dumps({"predictions": [{
            "video_id": "v", "query_id": "q", "results": [
                {"clip_id": "c", "start": 0, "end": 30, "fused_score": 1.0,
                 "visual_score": 1.0, "aural_score": 1.0},
            ],
        }]}))
        run(["evaluate", preds, gt, "--out", out_iou])
        run(["evaluate", preds, gt, "--out", out_cov, "--mode", "gt_coverage"])
        iou_doc = json.loads(out_iou.read_text())
        cov_doc = json.loads(out_cov.read_text())
        assert iou_doc["average_recall"]["1"] == 0.0
        assert cov_doc["average_recall"]["1"] == 1.0

    def test_join_failure_lists_ids(self, tmp_path, capsys):
        preds = tmp_path / "preds.json"
        preds.write_text(json.dumps({"predictions": []}))
        code = run([
            "evaluate", preds, FIXTURES / "ground_truth.json",
            "--out", tmp_path / "report.json",
        ])
        assert code == 1
        err = capsys.readouterr().err
        assert "q1" in err and "q2" in err and "q3" in err


class TestPipeline:
    def test_golden_run_byte_identical(self, tmp_path):
        outputs = {}
        for run_dir in ("a", "b"):
            out_dir = tmp_path / run_dir
            code = run([
                "pipeline",
                "--config", FIXTURES / "config.json",
                "--transcript", FIXTURES / "transcript.json",
                "--ground-truth", FIXTURES / "ground_truth.json",
                "--out-dir", out_dir,
            ])
            assert code == 0
            outputs[run_dir] = {
                name: (out_dir / name).read_bytes()
                for name in ("clips.json", "predictions.json", "report.json", "curves.csv")
            }
        assert outputs["a"] == outputs["b"]
        for name, blob in outputs["a"].items():
            assert blob == (GOLDEN / name).read_bytes(), name

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"provider": "mock", "typo_key": 1}))
        code = run([
            "pipeline",
            "--config", config,
            "--transcript", FIXTURES / "transcript.json",
            "--ground-truth", FIXTURES / "ground_truth.json",
            "--out-dir", tmp_path / "out",
        ])
        assert code == 1
        assert "typo_key" in capsys.readouterr().err


class TestRerankerFallback:
    def test_http_reranker_with_fallback(self, tmp_path):
        # endpoint that always refuses connections; fallback must kick in
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "provider": "mock",
            "seed": 7,
            "mock_dim": 32,
            "reranker": "http",
            "reranker_endpoint": "http://127.0.0.1:9/rerank",
            "reranker_fallback": True,
            "http_retries": 0,
            "http_timeout_s": 0.2,
            "workers": 1,
        }))
        out = tmp_path / "predictions.json"
        code = run([
            "retrieve",
            "--config", config,
            "--transcript", FIXTURES / "transcript.json",
            "--queries", FIXTURES / "queries.json",
            "--out", out,
        ])
        assert code == 0
        # identity fallback makes this equal to the identity-reranker golden
        assert out.read_bytes() == (GOLDEN / "predictions.json").read_bytes()

    def test_http_reranker_without_fallback_fails(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "provider": "mock",
            "reranker": "http",
            "reranker_endpoint": "http://127.0.0.1:9/rerank",
            "http_retries": 0,
            "http_timeout_s": 0.2,
            "workers": 1,
        }))
        code = run([
            "retrieve",
            "--config", config,
            "--transcript", FIXTURES / "transcript.json",
            "--queries", FIXTURES / "queries.json",
            "--out", tmp_path / "out.json",
        ])
        assert code == 1
        assert "aural: reranker failed" in capsys.readouterr().err
