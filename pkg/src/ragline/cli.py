"""Operator command line: ingest, index, serve, eval, export, ask.

Every subcommand exits 0 on success and prints a single machine-parsable
JSON error line to stderr on failure. Exit codes: 2 usage/config, 3 IO or
corrupt data, 4 backend failure.

Setting RAGLINE_MOCK_LLM=1 makes `ask` and `serve` spin up the scripted
local chat backend instead of calling a real endpoint, which keeps demos
and smoke tests fully offline.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import evaluation
from .config import ServiceConfig, load_config
from .embeddings import make_provider
from .errors import (
    BackendError,
    BuildFailed,
    ConfigError,
    CorruptIndex,
    EmptyDocument,
    EmptyEvaluation,
    EmptyQuery,
    GenerationTimeout,
    NotFound,
    RetrievalFailed,
    StorageError,
    StreamAborted,
    TemplateError,
    ValidationError,
)
from .feedback import FeedbackStore
from .generation import BUILTIN_TEMPLATES, ModelProfile, generate, render_prompt
from .index import build_index, load_index, save_index
from .ingest import (
    ChunkingConfig,
    chunk_document,
    discover_corpus,
    extract_text,
    read_chunks,
    tag_metadata,
    write_chunks,
)
from .retrieval import RetrievalMode, assemble_context, retrieve

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_BACKEND = 4

MOCK_ENV = "RAGLINE_MOCK_LLM"
CHAT_ENDPOINT_ENV = "RAGLINE_CHAT_ENDPOINT"

_IO_ERRORS = (OSError, CorruptIndex, EmptyDocument, StorageError, NotFound)
_BACKEND_ERRORS = (BackendError, GenerationTimeout, StreamAborted, RetrievalFailed, BuildFailed)
_USAGE_ERRORS = (ValidationError, ConfigError, EmptyQuery, TemplateError, EmptyEvaluation, ValueError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ragline", description="Document-grounded question answering toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="extract and chunk a corpus into a JSON Lines chunk file")
    p.add_argument("--corpus", required=True, help="corpus directory or JSON manifest")
    p.add_argument("--out", required=True, help="output chunks file (JSON Lines)")
    p.add_argument("--max-chars", type=int, default=1000)
    p.add_argument("--overlap", type=int, default=200)
    p.add_argument("--boundary", choices=["hard", "sentence"], default="hard")
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser("index", help="embed chunks and write a binary vector index")
    p.add_argument("--chunks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--provider", choices=["local", "remote"], default="local")
    p.add_argument("--dim", type=int, default=256, help="local provider dimension")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--model", default=None, help="remote embedding model name")
    p.add_argument("--endpoint", default=None, help="remote embeddings endpoint URL")
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", required=True)
    p.set_defaults(handler=cmd_serve)

    p = sub.add_parser("eval", help="rating reports and round comparisons")
    eval_sub = p.add_subparsers(dest="eval_command", required=True)
    pr = eval_sub.add_parser("report", help="Likert report from a store or export JSONL")
    pr.add_argument("--from", dest="source", required=True, help="feedback store (.db) or export JSONL")
    pr.add_argument("--round", dest="label", required=True, help="label for this evaluation round")
    pr.add_argument("--model", default=None, help="only ratings for this model id")
    pr.add_argument("--json", dest="json_out", default=None, help="also write the report as JSON ('-' = stdout)")
    pr.set_defaults(handler=cmd_eval_report)
    pc = eval_sub.add_parser("compare", help="compare two report JSON files")
    pc.add_argument("--a", required=True)
    pc.add_argument("--b", required=True)
    pc.add_argument("--json", dest="json_out", default=None)
    pc.set_defaults(handler=cmd_eval_compare)

    p = sub.add_parser("export", help="bulk-export interactions and feedback as JSON Lines")
    p.add_argument("--all", action="store_true", required=True, help="export every interaction")
    p.add_argument("--store", required=True)
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.set_defaults(handler=cmd_export)

    p = sub.add_parser("ask", help="one-shot query: print sources, then stream the answer")
    p.add_argument("--index", required=True)
    p.add_argument("--chunks", required=True, help="chunks file matching the index")
    p.add_argument("--question", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--mode", choices=[m.value for m in RetrievalMode], default=RetrievalMode.FULL_CHUNK.value)
    p.add_argument("--model", default=None, help="model id (registry entry, or ad-hoc name)")
    p.add_argument("--config", default=None, help="service config supplying the model registry")
    p.add_argument("--language", choices=sorted(BUILTIN_TEMPLATES), default="en")
    p.add_argument("--budget", type=int, default=6000, help="context character budget")
    p.set_defaults(handler=cmd_ask)

    return parser


def cmd_ingest(args) -> int:
    cfg = ChunkingConfig(max_chars=args.max_chars, overlap_chars=args.overlap, boundary_mode=args.boundary)
    chunks = []
    documents = 0
    for entry in discover_corpus(args.corpus):
        doc = extract_text(entry["path"], title=entry["title"], language=entry["language"])
        chunks.extend(tag_metadata(c, doc) for c in chunk_document(doc, cfg))
        documents += 1
    write_chunks(chunks, args.out)
    print(json.dumps({"documents": documents, "chunks": len(chunks), "out": args.out}))
    return EXIT_OK


def cmd_index(args) -> int:
    chunks = read_chunks(args.chunks)
    if not chunks:
        raise ValidationError(f"{args.chunks} contains no chunks")
    provider = make_provider(args.provider, dim=args.dim, endpoint_url=args.endpoint, model=args.model)
    index = build_index(chunks, provider, batch_size=args.batch_size)
    save_index(index, args.out)
    print(json.dumps({"entries": len(index), "provider_id": index.provider_id, "out": args.out}))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    config = load_config(args.config)
    mock = _maybe_start_mock()
    if mock is not None:
        config = replace(config, models=tuple(replace(m, endpoint_url=mock.url) for m in config.models))
        print(f"mock chat backend at {mock.url}", file=sys.stderr)
    app = create_app(config)
    uvicorn.run(app, host=config.bind_host, port=config.bind_port, log_level="warning")
    return EXIT_OK


def cmd_eval_report(args) -> int:
    ratings = evaluation.load_ratings(args.source, model_id=args.model)
    report = evaluation.likert_report(args.label, ratings)
    print(evaluation.format_report_table(report))
    _maybe_write_json(args.json_out, report.to_dict())
    return EXIT_OK


def cmd_eval_compare(args) -> int:
    report_a = evaluation.LikertReport.from_dict(json.loads(Path(args.a).read_text(encoding="utf-8")))
    report_b = evaluation.LikertReport.from_dict(json.loads(Path(args.b).read_text(encoding="utf-8")))
    print(evaluation.format_comparison_table(report_a, report_b))
    _maybe_write_json(args.json_out, evaluation.compare_rounds(report_a, report_b).to_dict())
    return EXIT_OK


def cmd_export(args) -> int:
    store = FeedbackStore(args.store)
    lines = store.export_all_jsonl()
    if args.out == "-":
        for line in lines:
            print(line)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            for line in lines:
                fh.write(line + "\n")
    return EXIT_OK


def cmd_ask(args) -> int:
    index = load_index(args.index)
    chunks = {c.chunk_id: c for c in read_chunks(args.chunks)}
    provider = make_provider("local", dim=index.dim) if index.provider_id.startswith("local-") else _remote_from_index(index)

    mock = _maybe_start_mock()
    profile = _resolve_profile(args, mock)

    hits = retrieve(
        args.question,
        index,
        chunks,
        provider,
        k=args.k,
        threshold=args.threshold,
        mode=RetrievalMode(args.mode),
    )
    bundle = assemble_context(hits, args.budget)
    system_text, user_text = render_prompt(bundle, args.question, BUILTIN_TEMPLATES[args.language])

    for i, hit in enumerate(bundle.hits, start=1):
        title = hit.metadata.get("title", "")
        source_path = hit.metadata.get("source_path", "")
        print(f"[S{i}] {hit.score:.4f} {title} ({source_path})")
    if bundle.no_context:
        print("(no sources above threshold)")
    print()

    try:
        result = generate(
            system_text,
            user_text,
            profile,
            on_token=lambda piece: print(piece, end="", flush=True),
        )
    finally:
        if mock is not None:
            mock.stop()
    print()
    print(f"-- model {result.model_id}, {result.latency_ms} ms, {result.token_events} increments"
          + (", truncated" if result.truncated else ""), file=sys.stderr)
    return EXIT_OK


def _remote_from_index(index):
    raise ConfigError(
        f"index was built with provider {index.provider_id!r}; set RAGLINE_EMBED_ENDPOINT/"
        "RAGLINE_EMBED_MODEL and use the service config to query remote-embedded indexes"
    )


def _maybe_start_mock():
    if os.environ.get(MOCK_ENV, "").strip() not in ("", "0", "false"):
        from .mockllm import MockLLMServer

        return MockLLMServer().start()
    return None


def _resolve_profile(args, mock) -> ModelProfile:
    if args.config:
        config: ServiceConfig = load_config(args.config)
        profile = config.profile_for(args.model)
        if profile is None:
            raise ConfigError(f"model {args.model!r} is not in the registry of {args.config}")
        if mock is not None:
            profile = replace(profile, endpoint_url=mock.url)
        return profile
    if mock is not None:
        return ModelProfile(model_id=args.model or "mock-model", endpoint_url=mock.url, request_timeout=30)
    endpoint = os.environ.get(CHAT_ENDPOINT_ENV, "")
    if endpoint and args.model:
        return ModelProfile(model_id=args.model, endpoint_url=endpoint)
    raise ConfigError(
        f"no chat backend configured: pass --config, or set {CHAT_ENDPOINT_ENV} plus --model, "
        f"or set {MOCK_ENV}=1 for the scripted mock"
    )


def _maybe_write_json(target: str | None, payload: dict) -> None:
    if target is None:
        return
    text = json.dumps(payload, indent=2, sort_keys=True)
    if target == "-":
        print(text)
    else:
        Path(target).write_text(text + "\n", encoding="utf-8")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except _BACKEND_ERRORS as exc:
        _fail(EXIT_BACKEND, exc)
        return EXIT_BACKEND
    except _IO_ERRORS as exc:
        _fail(EXIT_IO, exc)
        return EXIT_IO
    except _USAGE_ERRORS as exc:
        _fail(EXIT_USAGE, exc)
        return EXIT_USAGE


def _fail(code: int, exc: Exception) -> None:
    print(json.dumps({"error": str(exc), "exit_code": code}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
