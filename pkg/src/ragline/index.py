"""Flat exact vector index: unit-norm float32 vectors, cosine top-k search.

No approximate structure is used; search is a full scan, which keeps results
exactly equal to a brute-force oracle and stays fast at the corpus sizes this
project targets. Indexes persist to a versioned little-endian binary format
(see save_index) so rebuilds with identical inputs are byte-identical.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .embeddings import EmbeddingProvider
from .errors import BuildFailed, CorruptIndex, DimensionError, ValidationError, ZeroVector
from .ingest import Chunk

logger = logging.getLogger(__name__)

MAGIC = b"ARGX"
FORMAT_VERSION = 1
ZERO_NORM_EPS = 1e-12


class SearchResult(NamedTuple):
    chunk_id: str
    score: float


@dataclass(frozen=True)
class IndexEntry:
    chunk_id: str
    vector: np.ndarray


@dataclass(frozen=True)
class VectorIndex:
    dim: int
    chunk_ids: tuple[str, ...]  # ascending, unique
    vectors: np.ndarray  # (n, dim) float32, rows aligned with chunk_ids
    provider_id: str
    built_at: str | None  # ISO-8601 UTC; None for loaded indexes (not persisted)

    def __len__(self) -> int:
        return len(self.chunk_ids)

    @property
    def entries(self) -> list[IndexEntry]:
        return [IndexEntry(cid, self.vectors[i]) for i, cid in enumerate(self.chunk_ids)]


def normalize(v: Sequence[float] | np.ndarray) -> np.ndarray:
    """Scale a vector to unit L2 norm, as float32.

    Raises ZeroVector when the norm is below 1e-12; callers drop the chunk
    with a warning rather than index a meaningless direction.
    """
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("normalize expects a non-empty 1-D vector")
    norm = float(np.linalg.norm(arr))
    if norm < ZERO_NORM_EPS:
        raise ZeroVector(f"vector norm {norm} below {ZERO_NORM_EPS}")
    return (arr / norm).astype(np.float32)


def build_index(
    chunks: Sequence[Chunk],
    provider: EmbeddingProvider,
    batch_size: int = 64,
    retries: int = 2,
) -> VectorIndex:
    """Embed chunks in batches and assemble a sorted, normalized index.

    Chunks whose embedding has zero norm are dropped and reported. A batch
    that still fails after ``retries`` re-attempts aborts the build with the
    number of chunks embedded so far.
    """
    if not chunks:
        raise ValidationError("build_index needs at least one chunk")
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")

    ids: list[str] = []
    rows: list[np.ndarray] = []
    dropped: list[str] = []
    for offset in range(0, len(chunks), batch_size):
        batch = chunks[offset : offset + batch_size]
        vectors = _embed_with_retries(provider, [c.text for c in batch], retries, embedded_so_far=len(ids))
        for chunk, vector in zip(batch, vectors):
            try:
                rows.append(normalize(vector))
            except ZeroVector:
                dropped.append(chunk.chunk_id)
                continue
            ids.append(chunk.chunk_id)
    if dropped:
        logger.warning("dropped %d chunk(s) with zero-norm embeddings: %s", len(dropped), ", ".join(dropped))
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate chunk_ids in index input")
    if not ids:
        raise BuildFailed("every chunk produced a zero-norm embedding", embedded_count=0)

    order = sorted(range(len(ids)), key=lambda i: ids[i])
    matrix = np.stack([rows[i] for i in order]).astype(np.float32)
    return VectorIndex(
        dim=int(matrix.shape[1]),
        chunk_ids=tuple(ids[i] for i in order),
        vectors=matrix,
        provider_id=provider.provider_id,
        built_at=datetime.now(timezone.utc).isoformat(),
    )


def _embed_with_retries(
    provider: EmbeddingProvider, texts: list[str], retries: int, embedded_so_far: int
) -> list[np.ndarray]:
    last_error: Exception | None = None
    for _ in range(retries + 1):
        try:
            vectors = provider.embed_batch(texts)
            if len(vectors) != len(texts):
                raise BuildFailed(
                    f"provider returned {len(vectors)} vectors for {len(texts)} texts",
                    embedded_count=embedded_so_far,
                )
            return vectors
        except BuildFailed:
            raise
        except Exception as exc:  # provider-defined failure modes
            last_error = exc
    raise BuildFailed(
        f"embedding provider failed after {retries + 1} attempts: {last_error}",
        embedded_count=embedded_so_far,
    )


def search(index: VectorIndex, query: np.ndarray, k: int, threshold: float = 0.0) -> list[SearchResult]:
    """Exact top-k by cosine (dot product of unit vectors).

    Results with score >= threshold come back sorted by descending score,
    ties broken by ascending chunk_id.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    query = np.asarray(query, dtype=np.float64)
    if query.ndim != 1 or query.shape[0] != index.dim:
        raise DimensionError(f"query dim {query.shape} does not match index dim {index.dim}")
    if len(index) == 0:
        return []
    # Row-wise float64 sums keep identical rows bit-identical, so duplicate
    # vectors tie exactly and the chunk_id tie-break is deterministic.
    scores = (index.vectors.astype(np.float64) * query).sum(axis=1)
    candidates = [
        SearchResult(index.chunk_ids[i], float(scores[i])) for i in np.flatnonzero(scores >= threshold)
    ]
    candidates.sort(key=lambda r: (-r.score, r.chunk_id))
    return candidates[:k]


# --- persistence ------------------------------------------------------------
#
# Layout (all integers little-endian):
#   magic "ARGX" | version u32 | dim u32 | entry count u64
#   | provider_id: u16 length + UTF-8 bytes
#   | per entry: chunk_id (u16 length + UTF-8) then dim * f32


def save_index(index: VectorIndex, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", index.dim))
        fh.write(struct.pack("<Q", len(index)))
        provider_bytes = index.provider_id.encode("utf-8")
        fh.write(struct.pack("<H", len(provider_bytes)))
        fh.write(provider_bytes)
        for i, chunk_id in enumerate(index.chunk_ids):
            id_bytes = chunk_id.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(index.vectors[i].astype("<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        if self.offset + count > len(self.data):
            raise CorruptIndex(f"truncated while reading {what}", offset=self.offset)
        out = self.data[self.offset : self.offset + count]
        self.offset += count
        return out

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def load_index(path: str | Path) -> VectorIndex:
    data = Path(path).read_bytes()
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise CorruptIndex(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version = r.u32("format version")
    if version > FORMAT_VERSION:
        raise CorruptIndex(f"unsupported version {version} (supported: <= {FORMAT_VERSION})", offset=4)
    dim = r.u32("dim")
    if dim == 0:
        raise CorruptIndex("dim must be positive", offset=8)
    count = r.u64("entry count")
    provider_len = r.u16("provider_id length")
    provider_id = r.take(provider_len, "provider_id").decode("utf-8")

    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float32)
    vector_bytes = 4 * dim
    for i in range(count):
        id_len = r.u16(f"entry {i} chunk_id length")
        ids.append(r.take(id_len, f"entry {i} chunk_id").decode("utf-8"))
        rows[i] = np.frombuffer(r.take(vector_bytes, f"entry {i} vector"), dtype="<f4")
    if r.offset != len(data):
        raise CorruptIndex(f"{len(data) - r.offset} trailing byte(s) after last entry", offset=r.offset)
    if ids != sorted(ids) or len(set(ids)) != len(ids):
        raise CorruptIndex("entries are not unique and sorted by chunk_id", offset=r.offset)
    return VectorIndex(dim=dim, chunk_ids=tuple(ids), vectors=rows, provider_id=provider_id, built_at=None)
