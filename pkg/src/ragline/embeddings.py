"""Embedding providers behind a single batch contract.

Every provider exposes ``provider_id``, ``dim``, and ``embed_batch``, which
maps a list of strings to one float32 vector per string. The local provider
is fully deterministic and offline (hashed bag of words); the remote provider
speaks the common embeddings wire shape over HTTPS.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import BackendError

DEFAULT_LOCAL_DIM = 256
DEFAULT_REMOTE_DIM = 1536
EMBED_API_KEY_ENV = "RAGLINE_EMBED_API_KEY"

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class EmbeddingProvider(Protocol):
    provider_id: str
    dim: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class HashedBagOfWordsProvider:
    """Deterministic local embedder: token counts hashed into ``dim`` buckets.

    Tokens are lowercased \\w+ runs; each token lands in the bucket given by
    the first 8 bytes of its BLAKE2b digest, so results are stable across
    processes and platforms. Vectors are L2-normalized; a text with no
    tokens yields the zero vector (dropped later by the index builder).
    """

    def __init__(self, dim: int = DEFAULT_LOCAL_DIM):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = dim
        self.provider_id = f"local-bow-{dim}"

    def _bucket(self, token: str) -> int:
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little") % self.dim

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        out = []
        for text in texts:
            counts = np.zeros(self.dim, dtype=np.float64)
            for token in _TOKEN_RE.findall(text.lower()):
                counts[self._bucket(token)] += 1.0
            norm = float(np.linalg.norm(counts))
            if norm > 0.0:
                counts /= norm
            out.append(counts.astype(np.float32))
        return out


class RemoteEmbeddingProvider:
    """Client for an embeddings endpoint: POST {"model", "input": [...]}
    returning {"data": [{"embedding": [...]}]}.

    The vector dimension is learned from the first response rather than
    hardcoded. The API key comes from an environment variable, never from
    flags or config files.
    """

    def __init__(
        self,
        endpoint_url: str,
        model: str,
        *,
        api_key_env: str = EMBED_API_KEY_ENV,
        timeout: float = 60.0,
        retries: int = 2,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint_url = endpoint_url
        self.model = model
        self.provider_id = f"remote:{model}"
        self.dim = DEFAULT_REMOTE_DIM
        self._dim_known = False
        self.retries = retries
        headers = {}
        api_key = os.environ.get(api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _post_once(self, texts: Sequence[str]) -> list[np.ndarray]:
        response = self._client.post(self.endpoint_url, json={"model": self.model, "input": list(texts)})
        if response.status_code // 100 != 2:
            raise BackendError(
                f"embeddings endpoint returned HTTP {response.status_code}",
                status_code=response.status_code,
                body_excerpt=response.text[:200],
            )
        data = response.json().get("data", [])
        if len(data) != len(texts):
            raise BackendError(f"embeddings endpoint returned {len(data)} vectors for {len(texts)} inputs")
        vectors = [np.asarray(item["embedding"], dtype=np.float32) for item in data]
        if vectors and not self._dim_known:
            self.dim = int(vectors[0].shape[0])
            self._dim_known = True
        return vectors

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            return []
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                return self._post_once(texts)
            except (httpx.HTTPError, BackendError) as exc:
                last_error = exc
                if attempt < self.retries:
                    time.sleep(min(2.0**attempt * 0.2, 2.0))
        raise BackendError(f"embeddings endpoint failed after {self.retries + 1} attempts: {last_error}")


def make_provider(
    kind: str,
    *,
    dim: int = DEFAULT_LOCAL_DIM,
    endpoint_url: str | None = None,
    model: str | None = None,
) -> EmbeddingProvider:
    if kind == "local":
        return HashedBagOfWordsProvider(dim=dim)
    if kind == "remote":
        endpoint_url = endpoint_url or os.environ.get("RAGLINE_EMBED_ENDPOINT", "")
        model = model or os.environ.get("RAGLINE_EMBED_MODEL", "")
        if not endpoint_url or not model:
            raise ValueError("remote provider needs an endpoint URL and model name (config or RAGLINE_EMBED_* env)")
        return RemoteEmbeddingProvider(endpoint_url, model)
    raise ValueError(f"unknown embedding provider kind {kind!r}")
