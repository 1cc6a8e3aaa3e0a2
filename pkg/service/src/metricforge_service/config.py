"""Service configuration resolved from environment variables."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping

ENV_PREFIX = "METRICFORGE_"

DEFAULT_STS_CHECKPOINT = "cross-encoder/stsb-roberta-base"
DEFAULT_MNLI_CHECKPOINT = "roberta-large-mnli"
DEFAULT_LM_CHECKPOINT = "gpt2"


@dataclass(frozen=True)
class ServiceConfig:
    """Checkpoint identifiers plus request and server limits."""

    sts_checkpoint: str = DEFAULT_STS_CHECKPOINT
    mnli_checkpoint: str = DEFAULT_MNLI_CHECKPOINT
    lm_checkpoint: str = DEFAULT_LM_CHECKPOINT
    max_batch: int = 32
    max_len: int = 256
    host: str = "127.0.0.1"
    port: int = 8640

    def __post_init__(self) -> None:
        if self.max_batch < 1:
            raise ValueError(f"max_batch must be positive, got {self.max_batch}")
        if self.max_len < 8:
            raise ValueError(f"max_len must be at least 8, got {self.max_len}")
        if not 0 < self.port < 65536:
            raise ValueError(f"port out of range: {self.port}")
        for field in ("sts_checkpoint", "mnli_checkpoint", "lm_checkpoint"):
            if not getattr(self, field).strip():
                raise ValueError(f"{field} must be a non-empty checkpoint id")

    @classmethod
    def from_env(cls, environ: Mapping[str, str] | None = None) -> "ServiceConfig":
        env = os.environ if environ is None else environ

        def get(name: str, default, cast=str):
            raw = env.get(ENV_PREFIX + name)
            if raw is None:
                return default
            try:
                return cast(raw)
            except ValueError:
                raise ValueError(f"{ENV_PREFIX}{name}={raw!r} is not a valid {cast.__name__}")

        return cls(
            sts_checkpoint=get("STS_CHECKPOINT", cls.sts_checkpoint),
            mnli_checkpoint=get("MNLI_CHECKPOINT", cls.mnli_checkpoint),
            lm_checkpoint=get("LM_CHECKPOINT", cls.lm_checkpoint),
            max_batch=get("MAX_BATCH", cls.max_batch, int),
            max_len=get("MAX_LEN", cls.max_len, int),
            host=get("HOST", cls.host),
            port=get("PORT", cls.port, int),
        )
