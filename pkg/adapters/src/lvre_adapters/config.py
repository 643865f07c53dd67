"""Adapter configuration: model identities, batching, device, credentials.

Concrete model choices are configuration, not contracts — swapping models
must never require a change on the engine side. Credentials come from
environment variables only and are never persisted.
"""

from __future__ import annotations

import os
from dataclasses import dataclass


class AdapterError(RuntimeError):
    """A model adapter failed: missing backend, bad input, encoder error."""


@dataclass(frozen=True)
class AdapterConfig:
    speech_model: str = "openai/whisper-large-v3-turbo"
    text_encoder_model: str = "NovaSearch/stella_en_400M_v5"
    video_encoder: str = ""  # dotted path "module:callable" for a video CLIP backend
    reranker_model: str = "gemini-2.0-flash"
    batch_size: int = 16
    device: str = "cpu"
    api_key_env: str = "RERANKER_API_KEY"

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env, "")
        if not key:
            raise AdapterError(
                f"no credentials: set {self.api_key_env} in the environment"
            )
        return key
