"""ragline: document-grounded question answering with feedback analytics.

Pipeline: ingest (chunked corpus) -> index (unit-norm vectors, exact cosine
search) -> retrieval (budgeted, citation-marked context) -> generation
(streamed answers) -> feedback (durable interaction + rating store) ->
evaluation (Likert reports). The `service` module serves it over HTTP and
`cli` drives the full lifecycle from the shell.
"""

from .embeddings import HashedBagOfWordsProvider, RemoteEmbeddingProvider, make_provider
from .evaluation import LatencyStats, LikertReport, compare_rounds, latency_stats, likert_report
from .feedback import FeedbackRecord, FeedbackStore, InteractionRecord
from .generation import (
    BUILTIN_TEMPLATES,
    GenerationResult,
    ModelProfile,
    PromptTemplate,
    generate,
    render_prompt,
)
from .index import VectorIndex, build_index, load_index, normalize, save_index, search
from .ingest import Chunk, ChunkingConfig, SourceDocument, chunk_document, extract_text, tag_metadata
from .retrieval import ContextBundle, RetrievalHit, RetrievalMode, assemble_context, retrieve

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_TEMPLATES",
    "Chunk",
    "ChunkingConfig",
    "ContextBundle",
    "FeedbackRecord",
    "FeedbackStore",
    "GenerationResult",
    "HashedBagOfWordsProvider",
    "InteractionRecord",
    "LatencyStats",
    "LikertReport",
    "ModelProfile",
    "PromptTemplate",
    "RemoteEmbeddingProvider",
    "RetrievalHit",
    "RetrievalMode",
    "SourceDocument",
    "VectorIndex",
    "assemble_context",
    "build_index",
    "chunk_document",
    "compare_rounds",
    "extract_text",
    "generate",
    "latency_stats",
    "likert_report",
    "load_index",
    "make_provider",
    "normalize",
    "render_prompt",
    "retrieve",
    "save_index",
    "search",
    "tag_metadata",
]
