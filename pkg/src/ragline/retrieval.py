"""Query-time retrieval: score chunks, then assemble a budgeted context.

Two modes exist because the retrieval strategy changed across deployments:
``full_chunk`` returns the top-k chunks directly, while the legacy
``filename_grouped`` mode keeps only each document's best chunk before
truncating to k documents. Both join index search results against the chunk
store so hits carry their text and provenance metadata.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

from .embeddings import EmbeddingProvider
from .errors import EmptyQuery, RetrievalFailed, ValidationError, ZeroVector
from .index import VectorIndex, normalize, search
from .ingest import Chunk


class RetrievalMode(str, enum.Enum):
    FULL_CHUNK = "full_chunk"
    FILENAME_GROUPED = "filename_grouped"


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    chunk_text: str
    metadata: dict[str, str]


@dataclass(frozen=True)
class ContextBundle:
    hits: tuple[RetrievalHit, ...]  # hits actually rendered, in rank order
    context_text: str
    char_budget: int
    used_chars: int
    no_context: bool = field(default=False)


def embed_query(query_text: str, provider: EmbeddingProvider):
    if not query_text or not query_text.strip():
        raise EmptyQuery("query text is blank")
    try:
        raw = provider.embed_batch([query_text])[0]
        return normalize(raw)
    except EmptyQuery:
        raise
    except ZeroVector as exc:
        raise RetrievalFailed(f"query produced a zero-norm embedding: {exc}") from exc
    except Exception as exc:
        raise RetrievalFailed(f"embedding provider failed: {exc}") from exc


def retrieve(
    query_text: str,
    index: VectorIndex,
    chunks: Mapping[str, Chunk],
    provider: EmbeddingProvider,
    k: int = 5,
    threshold: float = 0.0,
    mode: RetrievalMode = RetrievalMode.FULL_CHUNK,
) -> list[RetrievalHit]:
    """Embed the query and return scored, text-joined hits for one mode."""
    query = embed_query(query_text, provider)
    mode = RetrievalMode(mode)

    if mode is RetrievalMode.FULL_CHUNK:
        results = search(index, query, k=k, threshold=threshold)
    else:
        # Scan everything above the threshold, keep each document's best
        # chunk (score desc, chunk_id asc on ties), then truncate to k docs.
        everything = search(index, query, k=max(len(index), 1), threshold=threshold)
        best_per_doc: dict[str, tuple] = {}
        for rank, result in enumerate(everything):
            doc_id = _doc_id_for(result.chunk_id, chunks)
            if doc_id not in best_per_doc:
                best_per_doc[doc_id] = (rank, result)
        results = [result for _, result in sorted(best_per_doc.values())][:k]

    hits = []
    for result in results:
        chunk = chunks.get(result.chunk_id)
        if chunk is None:
            raise RetrievalFailed(f"index entry {result.chunk_id} has no chunk text in the chunk store")
        hits.append(
            RetrievalHit(
                chunk_id=result.chunk_id,
                score=result.score,
                chunk_text=chunk.text,
                metadata=dict(chunk.metadata),
            )
        )
    return hits


def _doc_id_for(chunk_id: str, chunks: Mapping[str, Chunk]) -> str:
    chunk = chunks.get(chunk_id)
    if chunk is not None:
        return chunk.doc_id
    return chunk_id.rsplit("#", 1)[0]


def render_source_block(marker_ordinal: int, hit: RetrievalHit) -> str:
    title = hit.metadata.get("title", "")
    source_path = hit.metadata.get("source_path", "")
    return f"[S{marker_ordinal}] ({title} — {source_path})\n{hit.chunk_text}\n\n"


def assemble_context(hits: list[RetrievalHit], char_budget: int) -> ContextBundle:
    """Greedily pack hits into the budget, in rank order.

    A hit whose rendered block would overflow the remaining budget is skipped
    whole; chunks are never truncated mid-text, which keeps every citation
    marker pointing at a complete excerpt. Included hits are re-numbered
    [S1], [S2], ... consecutively.
    """
    if char_budget <= 0:
        raise ValidationError(f"char_budget must be positive, got {char_budget}")
    included: list[RetrievalHit] = []
    parts: list[str] = []
    used = 0
    for hit in hits:
        block = render_source_block(len(included) + 1, hit)
        if used + len(block) > char_budget:
            continue
        included.append(hit)
        parts.append(block)
        used += len(block)
    return ContextBundle(
        hits=tuple(included),
        context_text="".join(parts),
        char_budget=char_budget,
        used_chars=used,
        no_context=not included,
    )
