"""HTTP service: streamed query answering, feedback intake, history, admin.

Query answers stream as server-sent events with named event types: one
``sources`` event (the cited chunks), ordered ``token`` events, and a final
``done`` event carrying the persisted interaction id. Failures that occur
before any token has streamed map to HTTP status codes; failures mid-stream
surface as an ``error`` event because the 200 is already on the wire.

The retrieval state (index plus chunk texts) is an immutable pair swapped
atomically by reindexing: requests capture a reference once, so in-flight
queries always finish against a single consistent index.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import StreamingResponse
from pydantic import BaseModel

from .config import ServiceConfig
from .embeddings import EmbeddingProvider, make_provider
from .errors import (
    BackendError,
    GenerationTimeout,
    NotFound,
    RaglineError,
    RetrievalFailed,
    StorageError,
    StreamAborted,
    ValidationError,
)
from .feedback import FeedbackStore, InteractionRecord
from .generation import BUILTIN_TEMPLATES, GenerationResult, PromptTemplate, generate, render_prompt
from .index import VectorIndex, build_index, load_index, save_index
from .ingest import Chunk, read_chunks
from .retrieval import RetrievalMode, assemble_context, retrieve

logger = logging.getLogger(__name__)
access_log = logging.getLogger("ragline.access")


@dataclass(frozen=True)
class RetrievalState:
    index: VectorIndex
    chunks: dict[str, Chunk]
    chunks_source: str


class ServiceRuntime:
    """Mutable service state: provider, store, and the swappable index pair."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.provider: EmbeddingProvider = make_provider(
            config.embedding.provider,
            dim=config.embedding.dim,
            endpoint_url=config.embedding.endpoint_url,
            model=config.embedding.model,
        )
        self.store = FeedbackStore(config.store_path)
        self.state: RetrievalState | None = self._load_initial_state()
        self._reindex_lock = threading.Lock()
        self._sessions_lock = threading.Lock()
        self._active_sessions: set[str] = set()

    def _load_initial_state(self) -> RetrievalState | None:
        try:
            index = load_index(self.config.index_path)
            chunks = {c.chunk_id: c for c in read_chunks(self.config.chunks_path)}
        except (OSError, RaglineError) as exc:
            logger.warning("starting degraded, retrieval state unavailable: %s", exc)
            return None
        missing = [cid for cid in index.chunk_ids if cid not in chunks]
        if missing:
            logger.warning("%d indexed chunk id(s) missing from %s", len(missing), self.config.chunks_path)
        return RetrievalState(index=index, chunks=chunks, chunks_source=self.config.chunks_path)

    def template_for(self, language: str | None) -> PromptTemplate:
        if language in BUILTIN_TEMPLATES and (not self.config.ui_languages or language in self.config.ui_languages):
            return BUILTIN_TEMPLATES[language]
        return BUILTIN_TEMPLATES[self.config.ui_languages[0]]

    def begin_session(self, session_id: str) -> bool:
        with self._sessions_lock:
            if session_id in self._active_sessions:
                return False
            self._active_sessions.add(session_id)
            return True

    def end_session(self, session_id: str) -> None:
        with self._sessions_lock:
            self._active_sessions.discard(session_id)

    def try_begin_reindex(self) -> bool:
        return self._reindex_lock.acquire(blocking=False)

    def end_reindex(self) -> None:
        self._reindex_lock.release()


class QueryRequest(BaseModel):
    session_id: str
    question: str
    model_id: str | None = None
    language: str | None = None


class FeedbackRequest(BaseModel):
    interaction_id: str
    rating: int
    comment: str | None = None


class ReindexRequest(BaseModel):
    chunks_path: str


def sse_event(name: str, payload) -> str:
    return f"event: {name}\ndata: {json.dumps(payload, ensure_ascii=False)}\n\n"


def _generation_worker(out: queue.Queue, system_text: str, user_text: str, profile, cancel: threading.Event):
    try:
        result = generate(
            system_text,
            user_text,
            profile,
            on_token=lambda piece: out.put(("token", piece)),
            cancel=cancel,
        )
        out.put(("done", result))
    except StreamAborted as exc:
        if cancel.is_set():
            logger.info("stream abandoned by client, %d partial chars discarded", len(exc.partial_text))
        out.put(("error", exc))
    except Exception as exc:
        out.put(("error", exc))


def create_app(config: ServiceConfig) -> FastAPI:
    runtime = ServiceRuntime(config)
    app = FastAPI(title="ragline", docs_url=None, redoc_url=None)
    app.state.runtime = runtime
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.middleware("http")
    async def request_log(request, call_next):
        started = time.monotonic()
        response = await call_next(request)
        access_log.info(
            json.dumps(
                {
                    "ts": datetime.now(timezone.utc).isoformat(),
                    "method": request.method,
                    "path": request.url.path,
                    "status": response.status_code,
                    "duration_ms": int((time.monotonic() - started) * 1000),
                }
            )
        )
        return response

    @app.post("/api/query")
    def api_query(body: QueryRequest):
        received_at = time.monotonic()
        if not body.question.strip():
            raise HTTPException(status_code=400, detail="question is blank")
        profile = runtime.config.profile_for(body.model_id)
        if profile is None:
            raise HTTPException(status_code=404, detail=f"unknown model {body.model_id!r}")
        state = runtime.state
        if state is None:
            raise HTTPException(status_code=503, detail="retrieval index unavailable")
        if not runtime.begin_session(body.session_id):
            raise HTTPException(status_code=409, detail="a generation is already running for this session")

        cancel = threading.Event()
        try:
            retrieval_cfg = runtime.config.retrieval
            hits = retrieve(
                body.question,
                state.index,
                state.chunks,
                runtime.provider,
                k=retrieval_cfg.k,
                threshold=retrieval_cfg.threshold,
                mode=RetrievalMode(retrieval_cfg.mode),
            )
            bundle = assemble_context(hits, retrieval_cfg.char_budget)
            system_text, user_text = render_prompt(bundle, body.question, runtime.template_for(body.language))

            events: queue.Queue = queue.Queue()
            worker = threading.Thread(
                target=_generation_worker,
                args=(events, system_text, user_text, profile, cancel),
                daemon=True,
            )
            worker.start()
            # Hold the response until the backend produces something, so
            # pre-stream failures still map to real HTTP status codes.
            wait_budget = profile.request_timeout * (profile.retries + 1) + 30
            first = events.get(timeout=wait_budget)
            if first[0] == "error":
                raise first[1]
        except RetrievalFailed as exc:
            cancel.set()
            runtime.end_session(body.session_id)
            logger.error("retrieval failed: %s", exc)
            raise HTTPException(status_code=502, detail="embedding backend unavailable") from exc
        except GenerationTimeout as exc:
            runtime.end_session(body.session_id)
            raise HTTPException(status_code=504, detail="generation backend timed out") from exc
        except BackendError as exc:
            runtime.end_session(body.session_id)
            logger.error("backend error: %s", exc)
            raise HTTPException(status_code=502, detail="generation backend error") from exc
        except queue.Empty:
            cancel.set()
            runtime.end_session(body.session_id)
            raise HTTPException(status_code=504, detail="generation backend timed out")
        except Exception:
            cancel.set()
            runtime.end_session(body.session_id)
            raise

        def event_stream(first_item):
            try:
                yield sse_event(
                    "sources",
                    [
                        {
                            "chunk_id": hit.chunk_id,
                            "title": hit.metadata.get("title", ""),
                            "source_path": hit.metadata.get("source_path", ""),
                            "score": hit.score,
                        }
                        for hit in bundle.hits
                    ],
                )
                item = first_item
                while True:
                    kind, value = item
                    if kind == "token":
                        yield sse_event("token", {"text": value})
                        item = events.get(timeout=wait_budget)
                    elif kind == "done":
                        yield from _finalize(value)
                        return
                    else:  # error after streaming began
                        logger.error("generation aborted mid-stream: %s", value)
                        yield sse_event("error", {"message": "generation aborted"})
                        return
            except queue.Empty:
                yield sse_event("error", {"message": "generation backend stalled"})
            finally:
                cancel.set()
                runtime.end_session(body.session_id)

        def _finalize(result: GenerationResult):
            # End-to-end latency: query receipt to final token, which is
            # larger than the generation client's own started-to-finished
            # window because it includes retrieval and prompt rendering.
            latency_ms = max(result.latency_ms, int((time.monotonic() - received_at) * 1000))
            record = InteractionRecord(
                session_id=body.session_id,
                query_text=body.question,
                retrieved=[(hit.chunk_id, hit.score) for hit in hits],
                answer_text=result.answer_text,
                model_id=result.model_id,
                retrieval_mode=runtime.config.retrieval.mode,
                latency_ms=latency_ms,
            )
            done_payload = {"interaction_id": None, "latency_ms": latency_ms, "truncated": result.truncated}
            try:
                done_payload["interaction_id"] = runtime.store.record_interaction(record)
            except StorageError as exc:
                logger.error("interaction not persisted: %s", exc)
                yield sse_event("error", {"message": "answer could not be saved to history"})
            yield sse_event("done", done_payload)

        return StreamingResponse(event_stream(first), media_type="text/event-stream")

    @app.post("/api/feedback", status_code=204)
    def api_feedback(body: FeedbackRequest):
        try:
            runtime.store.record_feedback(body.interaction_id, body.rating, body.comment)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except StorageError as exc:
            raise HTTPException(status_code=500, detail="feedback could not be saved") from exc
        return Response(status_code=204)

    @app.get("/api/history/{session_id}")
    def api_history(session_id: str):
        items = runtime.store.session_history(session_id)
        if not items:
            raise HTTPException(status_code=404, detail=f"session {session_id!r} has no interactions")
        return {"session_id": session_id, "interactions": items}

    @app.get("/api/export/{session_id}")
    def api_export(session_id: str, format: str = "html"):
        try:
            payload = runtime.store.export_history(session_id, format)
        except NotFound as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        media_type = "text/html; charset=utf-8" if format == "html" else "text/markdown; charset=utf-8"
        return Response(content=payload, media_type=media_type)

    @app.get("/api/models")
    def api_models():
        return {
            "models": [
                {"model_id": m.model_id, "max_answer_tokens": m.max_answer_tokens} for m in runtime.config.models
            ],
            "default_model": runtime.config.default_model,
        }

    @app.get("/api/healthz")
    def api_healthz():
        state = runtime.state
        store_ok = runtime.store.ok()
        return {
            "status": "ok" if state is not None and store_ok else "degraded",
            "index_entries": len(state.index) if state is not None else 0,
            "store_ok": store_ok,
        }

    @app.post("/api/admin/reindex")
    def api_reindex(body: ReindexRequest):
        if not runtime.try_begin_reindex():
            raise HTTPException(status_code=409, detail="a reindex is already running")
        try:
            try:
                chunks = read_chunks(body.chunks_path)
                if not chunks:
                    raise ValidationError(f"{body.chunks_path} contains no chunks")
            except (OSError, ValidationError) as exc:
                raise HTTPException(status_code=422, detail=f"unusable chunks file: {exc}") from exc
            try:
                index = build_index(chunks, runtime.provider)
            except RaglineError as exc:
                logger.error("reindex build failed: %s", exc)
                raise HTTPException(status_code=502, detail="index build failed") from exc
            _persist_index(index, runtime.config.index_path)
            runtime.state = RetrievalState(
                index=index,
                chunks={c.chunk_id: c for c in chunks},
                chunks_source=body.chunks_path,
            )
            return {"entries": len(index), "built_at": index.built_at}
        finally:
            runtime.end_reindex()

    return app


def _persist_index(index: VectorIndex, path: str) -> None:
    target = Path(path)
    tmp = target.with_suffix(target.suffix + ".tmp")
    save_index(index, tmp)
    tmp.replace(target)
