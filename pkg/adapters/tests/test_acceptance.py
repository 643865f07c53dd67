"""Boundary acceptance: everything the adapters emit must be consumable by
the engine with zero validation errors, and the rerank shim must stay
protocol-valid under upstream failure."""

import hashlib
import json
import threading

import numpy as np
import pytest
import requests

from lvre.cli import main as lvre_main
from lvre.providers import load_store
from lvre.timeline import parse_transcript

from lvre_adapters.embed_export import export_embeddings, load_manifest_items
from lvre_adapters.rerank_server import serve_rerank
from lvre_adapters.transcribe import export_transcript

SEGMENTS = [
    {"start": 0.0, "end": 12.5, "text": "welcome back to the kitchen"},
    {"start": 12.5, "end": 47.0, "text": "heat the oil in a pot"},
    {"start": 47.0, "end": 99.9, "text": "chop the squid into rings"},
    {"start": 114.0, "end": 121.0, "text": "add the squid into the hot oil"},
    {"start": 121.0, "end": 150.25, "text": "serve on a plate with lemon"},
]

QUERIES = [
    {"query_id": "q1", "video_id": "kitchen", "text": "Add the squid into a pot of hot oil"},
    {"query_id": "q2", "video_id": "kitchen", "text": "heat oil in a pan"},
]


def content_vector(payload, dim=24):
    digest = hashlib.sha256(str(payload).encode("utf-8")).digest()
    raw = np.frombuffer((digest * 4)[: dim * 4], dtype="<u4")
    return (raw.astype(np.float64) / 2**32) - 0.5


def stub_encoder(batch):
    return np.stack([content_vector(p) for p in batch])


def test_adapter_artifacts_drive_the_engine_end_to_end(tmp_path):
    # 1. transcript from the speech adapter, parsed and segmented by the engine
    media = tmp_path / "kitchen.mp4"
    media.write_bytes(b"fake media")
    transcript_path = tmp_path / "transcript.json"
    export_transcript(
        media, transcript_path,
        recognizer=lambda p: [dict(s) for s in SEGMENTS],
        video_id="kitchen",
    )
    parse_transcript(transcript_path.read_bytes())  # zero validation errors
    manifest_path = tmp_path / "clips.json"
    assert lvre_main(["segment", str(transcript_path), "--out", str(manifest_path)]) == 0

    # 2. embedding stores from the encoder adapter, loaded by the engine
    queries_path = tmp_path / "queries.json"
    queries_path.write_text(json.dumps({"queries": QUERIES}))

    clip_items = load_manifest_items(manifest_path, payload="clip")
    text_items = load_manifest_items(manifest_path, payload="text")
    query_items = [(q["query_id"], q["text"]) for q in QUERIES]

    stores = {
        "visual_clips": tmp_path / "visual_clips.lvre",
        "visual_queries": tmp_path / "visual_queries.lvre",
        "text_clips": tmp_path / "text_clips.lvre",
        "text_queries": tmp_path / "text_queries.lvre",
    }
    export_embeddings(clip_items, stub_encoder, stores["visual_clips"])
    export_embeddings(query_items, stub_encoder, stores["visual_queries"])
    export_embeddings(text_items, stub_encoder, stores["text_clips"])
    export_embeddings(query_items, stub_encoder, stores["text_queries"])
    for path in stores.values():
        load_store(path)  # zero validation errors

    # 3. the engine retrieves end-to-end from those stores alone
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "provider": "store",
        "visual_store_paths": [str(stores["visual_clips"]), str(stores["visual_queries"])],
        "text_store_paths": [str(stores["text_clips"]), str(stores["text_queries"])],
        "workers": 1,
    }))
    predictions_path = tmp_path / "predictions.json"
    code = lvre_main([
        "retrieve",
        "--config", str(config_path),
        "--transcript", str(transcript_path),
        "--queries", str(queries_path),
        "--out", str(predictions_path),
    ])
    assert code == 0
    doc = json.loads(predictions_path.read_text())
    assert len(doc["predictions"]) == 2
    for record in doc["predictions"]:
        assert record["status"] in ("ok", "empty_intersection")


def test_shim_protocol_valid_under_injected_failures():
    calls = {"n": 0}

    def flaky_upstream(query, candidates):
        calls["n"] += 1
        if calls["n"] % 3 == 0:
            raise RuntimeError("simulated upstream outage")
        if calls["n"] % 3 == 1:
            return "\n".join(cid for cid, _ in candidates)
        return "prose that mentions nothing useful"

    server = serve_rerank(0, upstream=flaky_upstream)
    thread = threading.Thread(
        target=lambda: server.serve_forever(poll_interval=0.02), daemon=True
    )
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}/rerank"
    try:
        candidates = [{"id": f"v:{i}", "text": f"subtitle {i}"} for i in range(5)]
        ids = {c["id"] for c in candidates}
        statuses = []
        for _ in range(12):
            response = requests.post(
                url, json={"query": "q", "candidates": candidates}, timeout=5
            )
            statuses.append(response.status_code)
            body = response.json()
            if response.status_code == 200:
                assert isinstance(body["ranking"], list)
                assert set(body["ranking"]) <= ids
                assert len(body["ranking"]) == len(set(body["ranking"]))
            else:
                assert response.status_code == 502
                assert "error" in body
        assert 200 in statuses and 502 in statuses
    finally:
        server.shutdown()
