"""Stateless HTTP shim implementing the rerank protocol over an LLM.

Whatever the model returns — a clean id list, prose, or nothing usable —
the response on 200 is always a schema-valid `{"ranking": [ids]}` with ids
drawn from the request's candidates. Upstream failures become 502 with a
reason; they never produce a malformed 200.

The prompt template is this adapter's own invention (a numbered candidate
list and an instruction to output ids by relevance); nothing upstream
prescribes one.
"""

from __future__ import annotations

import json
import logging
import re
from collections.abc import Callable
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import requests

from .config import AdapterConfig, AdapterError

logger = logging.getLogger(__name__)

# upstream: (query, [(id, text), ...]) -> raw model output text
Upstream = Callable[[str, list[tuple[str, str]]], str]

PROMPT_TEMPLATE = """You are ranking video subtitles by relevance to a query.

Query: {query}

Candidates:
{candidates}

Output only the candidate ids, one per line, most relevant first. Do not
output anything except ids that appear above.
"""


def render_prompt(query: str, candidates: list[tuple[str, str]]) -> str:
    listing = "\n".join(f"[{cid}] {text}" for cid, text in candidates)
    return PROMPT_TEMPLATE.format(query=query, candidates=listing)


def build_llm_upstream(config: AdapterConfig) -> Upstream:
    """Hosted-LLM backend via a generateContent-style REST endpoint; the
    API key comes from the environment and is sent per request only."""
    api_key = config.api_key()
    url = (
        "https://generativelanguage.googleapis.com/v1beta/models/"
        f"{config.reranker_model}:generateContent"
    )

    def call(query: str, candidates: list[tuple[str, str]]) -> str:
        response = requests.post(
            url,
            params={"key": api_key},
            json={"contents": [{"parts": [{"text": render_prompt(query, candidates)}]}]},
            timeout=60,
        )
        response.raise_for_status()
        body = response.json()
        return body["candidates"][0]["content"]["parts"][0]["text"]

    return call


def repair_ranking(raw_output: str, candidate_ids: list[str]) -> list[str]:
    """Extract candidate ids from arbitrary model output, ordered by first
    occurrence; if none appear, fall back to the input order. Longer ids
    are matched first so one id being a prefix of another cannot misfire.
    """
    if not candidate_ids:
        return []
    pattern = "|".join(
        re.escape(cid) for cid in sorted(set(candidate_ids), key=len, reverse=True)
    )
    first_seen: dict[str, int] = {}
    for match in re.finditer(pattern, raw_output):
        cid = match.group(0)
        if cid not in first_seen:
            first_seen[cid] = match.start()
    if not first_seen:
        return list(candidate_ids)
    return sorted(first_seen, key=first_seen.__getitem__)


class _RerankHandler(BaseHTTPRequestHandler):
    upstream: Upstream  # set on the subclass by serve_rerank

    def _respond(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self):
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length))
            query = body["query"]
            candidates = [(c["id"], c["text"]) for c in body["candidates"]]
            if not isinstance(query, str):
                raise TypeError("query must be a string")
        except (ValueError, KeyError, TypeError) as exc:
            self._respond(400, {"error": f"bad request: {exc}"})
            return

        try:
            raw_output = type(self).upstream(query, candidates)
        except Exception as exc:
            logger.warning("upstream rerank failure: %s", exc)
            self._respond(502, {"error": f"upstream failure: {exc}"})
            return

        ranking = repair_ranking(str(raw_output), [cid for cid, _ in candidates])
        self._respond(200, {"ranking": ranking})

    def log_message(self, *args):
        pass


def serve_rerank(
    port: int,
    upstream: Upstream | None = None,
    config: AdapterConfig | None = None,
    host: str = "127.0.0.1",
) -> ThreadingHTTPServer:
    """Bind the shim and return the server; callers drive serve_forever.
    Threading keeps concurrent requests independent (the handler holds no
    state)."""
    config = config or AdapterConfig()
    if upstream is None:
        upstream = build_llm_upstream(config)
    handler = type("BoundRerankHandler", (_RerankHandler,), {"upstream": staticmethod(upstream)})
    return ThreadingHTTPServer((host, port), handler)
