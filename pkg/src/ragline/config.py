"""Service configuration: JSON file schema, defaults, and validation.

Secrets never appear here; API keys are read from environment variables by
the provider and backend clients. See README for a full schema example.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embeddings import DEFAULT_LOCAL_DIM
from .errors import ConfigError
from .generation import BUILTIN_TEMPLATES, ModelProfile
from .retrieval import RetrievalMode


@dataclass(frozen=True)
class RetrievalDefaults:
    k: int = 5
    threshold: float = 0.0
    mode: str = RetrievalMode.FULL_CHUNK.value
    char_budget: int = 6000


@dataclass(frozen=True)
class EmbeddingConfig:
    provider: str = "local"  # local | remote
    dim: int = DEFAULT_LOCAL_DIM
    endpoint_url: str | None = None
    model: str | None = None


@dataclass(frozen=True)
class ServiceConfig:
    index_path: str
    chunks_path: str
    store_path: str
    models: tuple[ModelProfile, ...]
    default_model: str
    retrieval: RetrievalDefaults = field(default_factory=RetrievalDefaults)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    ui_languages: tuple[str, ...] = ("fi", "sv", "en")
    bind_host: str = "127.0.0.1"
    bind_port: int = 8080

    def profile_for(self, model_id: str | None) -> ModelProfile | None:
        wanted = model_id or self.default_model
        for profile in self.models:
            if profile.model_id == wanted:
                return profile
        return None


def config_from_dict(obj: dict) -> ServiceConfig:
    try:
        models = tuple(
            ModelProfile(
                model_id=m["model_id"],
                endpoint_url=m["endpoint_url"],
                max_answer_tokens=int(m.get("max_answer_tokens", 2000)),
                request_timeout=float(m.get("request_timeout", 120)),
                stream=bool(m.get("stream", True)),
                retries=int(m.get("retries", 2)),
                api_key_env=m.get("api_key_env", "RAGLINE_CHAT_API_KEY"),
            )
            for m in obj.get("models", [])
        )
        retrieval_obj = obj.get("retrieval", {})
        retrieval = RetrievalDefaults(
            k=int(retrieval_obj.get("k", 5)),
            threshold=float(retrieval_obj.get("threshold", 0.0)),
            mode=retrieval_obj.get("mode", RetrievalMode.FULL_CHUNK.value),
            char_budget=int(retrieval_obj.get("char_budget", 6000)),
        )
        embedding_obj = obj.get("embedding", {})
        embedding = EmbeddingConfig(
            provider=embedding_obj.get("provider", "local"),
            dim=int(embedding_obj.get("dim", DEFAULT_LOCAL_DIM)),
            endpoint_url=embedding_obj.get("endpoint_url"),
            model=embedding_obj.get("model"),
        )
        config = ServiceConfig(
            index_path=obj["index_path"],
            chunks_path=obj["chunks_path"],
            store_path=obj["store_path"],
            models=models,
            default_model=obj.get("default_model") or (models[0].model_id if models else ""),
            retrieval=retrieval,
            embedding=embedding,
            ui_languages=tuple(obj.get("ui_languages", ("fi", "sv", "en"))),
            bind_host=obj.get("bind_host", "127.0.0.1"),
            bind_port=int(obj.get("bind_port", 8080)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid service config: {exc}") from exc
    _validate(config)
    return config


def _validate(config: ServiceConfig) -> None:
    if not config.models:
        raise ConfigError("config must list at least one model profile")
    ids = [m.model_id for m in config.models]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate model ids in registry: {ids}")
    if config.profile_for(config.default_model) is None:
        raise ConfigError(f"default_model {config.default_model!r} is not in the model registry")
    if config.retrieval.k < 1:
        raise ConfigError(f"retrieval.k must be >= 1, got {config.retrieval.k}")
    if config.retrieval.char_budget < 1:
        raise ConfigError(f"retrieval.char_budget must be >= 1, got {config.retrieval.char_budget}")
    try:
        RetrievalMode(config.retrieval.mode)
    except ValueError:
        raise ConfigError(f"retrieval.mode must be one of {[m.value for m in RetrievalMode]}") from None
    if config.embedding.provider not in ("local", "remote"):
        raise ConfigError(f"embedding.provider must be 'local' or 'remote', got {config.embedding.provider!r}")
    for language in config.ui_languages:
        if language not in BUILTIN_TEMPLATES:
            raise ConfigError(f"no prompt template for ui language {language!r}")


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return config_from_dict(obj)
