"""Run configuration for the CLI: defaults, JSON config files, overrides.

Defaults follow the production setup: semantic top-K of 30 feeding
candidate generation, final top-K of 10 per stream, and the evaluation
threshold grid 0.50-0.95 in steps of 0.05. Command-line flags win over
config-file values.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .evaluation import DEFAULT_KS, DEFAULT_THRESHOLDS, OverlapMode


class ConfigError(ValueError):
    """Raised for unknown keys or invalid values in a run configuration."""


@dataclass(frozen=True)
class RunConfig:
    # Ranking depths
    k_visual: int = 10
    k_semantic: int = 30
    k_aural: int = 10

    # Evaluation
    overlap_mode: str = OverlapMode.IOU.value
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    ks: tuple[int, ...] = DEFAULT_KS
    match_comparison: str = "strict-greater"  # or "greater-equal"
    aggregate: str = "micro"  # or "macro" (per-video mean)

    # Providers: "mock", "store", or "http"
    provider: str = "mock"
    seed: int = 0
    mock_dim: int = 32
    visual_store_paths: tuple[str, ...] = ()
    text_store_paths: tuple[str, ...] = ()
    visual_endpoint: str = ""
    text_endpoint: str = ""
    http_timeout_s: float = 10.0
    http_retries: int = 2
    bearer_token: str = ""

    # Reranker: "identity" or "http"
    reranker: str = "identity"
    reranker_endpoint: str = ""
    reranker_fallback: bool = False  # fall back to identity on transport failure
    reranker_candidate_cap: int = 100

    # Lexical matching
    lexical_stopwords: tuple[str, ...] = ()

    # Execution
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)

    def __post_init__(self):
        for name in ("k_visual", "k_semantic", "k_aural"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for k in self.ks:
            if k < 1:
                raise ConfigError(f"evaluation ks must be >= 1, got {k}")
        if not self.thresholds:
            raise ConfigError("threshold grid is empty")
        previous = 0.0
        for t in self.thresholds:
            if not 0.0 < t < 1.0:
                raise ConfigError(f"threshold {t} outside (0, 1)")
            if t <= previous:
                raise ConfigError("thresholds must be strictly increasing")
            previous = t
        if self.overlap_mode not in (m.value for m in OverlapMode):
            raise ConfigError(f"unknown overlap_mode {self.overlap_mode!r}")
        if self.match_comparison not in ("strict-greater", "greater-equal"):
            raise ConfigError(f"unknown match_comparison {self.match_comparison!r}")
        if self.aggregate not in ("micro", "macro"):
            raise ConfigError(f"unknown aggregate {self.aggregate!r}")
        if self.provider not in ("mock", "store", "http"):
            raise ConfigError(f"unknown provider {self.provider!r}")
        if self.reranker not in ("identity", "http"):
            raise ConfigError(f"unknown reranker {self.reranker!r}")
        if self.reranker == "http" and not self.reranker_endpoint:
            raise ConfigError("reranker 'http' requires reranker_endpoint")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")

    @property
    def strict_match(self) -> bool:
        return self.match_comparison == "strict-greater"

    @property
    def mode(self) -> OverlapMode:
        return OverlapMode(self.overlap_mode)

    def with_overrides(self, **overrides) -> "RunConfig":
        """New config with the given non-None fields replaced."""
        cleaned = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **cleaned) if cleaned else self


_LIST_FIELDS = {
    "thresholds",
    "ks",
    "visual_store_paths",
    "text_store_paths",
    "lexical_stopwords",
}


def load_config(path: str | Path) -> RunConfig:
    """Load a JSON config file whose keys mirror RunConfig fields."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    kwargs = {}
    for key, value in doc.items():
        if key in _LIST_FIELDS:
            if not isinstance(value, list):
                raise ConfigError(f"config key {key!r} must be a list")
            value = tuple(value)
        kwargs[key] = value
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad config value: {exc}") from exc
