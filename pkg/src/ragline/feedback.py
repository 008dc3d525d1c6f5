"""Durable interaction and rating store backed by a single sqlite file.

Every answered query is persisted with its retrieved chunks, model id, and
latency; users rate answers 1..5 and may revise, with prior ratings kept in
an append-only audit trail. The store also renders printable conversation
exports (HTML or Markdown; print-to-PDF is an external step) and a bulk
JSON Lines dump consumed by the evaluation tooling.
"""

from __future__ import annotations

import html
import json
import sqlite3
import threading
import uuid
from contextlib import closing
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterator

from .errors import NotFound, StorageError, ValidationError

SCHEMA_VERSION = 1

_SCHEMA = """
CREATE TABLE IF NOT EXISTS interactions (
    interaction_id TEXT PRIMARY KEY,
    session_id     TEXT NOT NULL,
    query_text     TEXT NOT NULL,
    answer_text    TEXT NOT NULL,
    model_id       TEXT NOT NULL,
    retrieval_mode TEXT NOT NULL,
    created_at     TEXT NOT NULL,
    latency_ms     INTEGER NOT NULL,
    retrieved_json TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS idx_interactions_session ON interactions(session_id, created_at);
CREATE TABLE IF NOT EXISTS feedback (
    interaction_id TEXT PRIMARY KEY REFERENCES interactions(interaction_id),
    rating         INTEGER NOT NULL,
    comment        TEXT,
    rated_at       TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback_audit (
    audit_id       INTEGER PRIMARY KEY AUTOINCREMENT,
    interaction_id TEXT NOT NULL,
    rating         INTEGER NOT NULL,
    comment        TEXT,
    rated_at       TEXT NOT NULL,
    replaced_at    TEXT NOT NULL
);
"""


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class InteractionRecord:
    session_id: str
    query_text: str
    retrieved: list[tuple[str, float]]
    answer_text: str
    model_id: str
    retrieval_mode: str
    latency_ms: int
    created_at: str = ""  # assigned by the store when empty
    interaction_id: str = ""  # assigned by the store when empty


@dataclass
class FeedbackRecord:
    interaction_id: str
    rating: int
    comment: str | None = None
    rated_at: str = field(default_factory=_utc_now)


class FeedbackStore:
    """Single-writer, many-reader store over one sqlite database file."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self._write_lock = threading.Lock()
        with self._connect() as conn:
            version = conn.execute("PRAGMA user_version").fetchone()[0]
            if version > SCHEMA_VERSION:
                raise StorageError(f"store schema version {version} is newer than supported {SCHEMA_VERSION}")
            conn.executescript(_SCHEMA)
            conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")

    def _connect(self) -> sqlite3.Connection:
        conn = sqlite3.connect(self.path, timeout=30.0)
        conn.execute("PRAGMA journal_mode=WAL")
        conn.execute("PRAGMA foreign_keys=ON")
        return conn

    def ok(self) -> bool:
        try:
            with closing(self._connect()) as conn:
                conn.execute("SELECT COUNT(*) FROM interactions").fetchone()
            return True
        except (sqlite3.Error, StorageError):
            return False

    # --- interactions -------------------------------------------------------

    def record_interaction(self, rec: InteractionRecord) -> str:
        for name in ("session_id", "query_text", "model_id", "retrieval_mode"):
            if not getattr(rec, name):
                raise ValidationError(f"interaction field {name!r} is required")
        if rec.answer_text is None:
            raise ValidationError("interaction field 'answer_text' is required")
        if rec.latency_ms < 0:
            raise ValidationError(f"latency_ms must be >= 0, got {rec.latency_ms}")
        scores = [score for _, score in rec.retrieved]
        if scores != sorted(scores, reverse=True):
            raise ValidationError("retrieved scores must be in descending order")

        interaction_id = rec.interaction_id or uuid.uuid4().hex
        created_at = rec.created_at or _utc_now()
        try:
            with self._write_lock, closing(self._connect()) as conn, conn:
                conn.execute(
                    "INSERT INTO interactions VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?)",
                    (
                        interaction_id,
                        rec.session_id,
                        rec.query_text,
                        rec.answer_text,
                        rec.model_id,
                        rec.retrieval_mode,
                        created_at,
                        rec.latency_ms,
                        json.dumps([[cid, score] for cid, score in rec.retrieved]),
                    ),
                )
        except sqlite3.Error as exc:
            raise StorageError(f"failed to persist interaction: {exc}") from exc
        rec.interaction_id = interaction_id
        rec.created_at = created_at
        return interaction_id

    def get_interaction(self, interaction_id: str) -> InteractionRecord:
        with closing(self._connect()) as conn:
            row = conn.execute(
                "SELECT interaction_id, session_id, query_text, answer_text, model_id,"
                " retrieval_mode, created_at, latency_ms, retrieved_json"
                " FROM interactions WHERE interaction_id = ?",
                (interaction_id,),
            ).fetchone()
        if row is None:
            raise NotFound(f"interaction {interaction_id!r} does not exist")
        return _interaction_from_row(row)

    # --- ratings ------------------------------------------------------------

    def record_feedback(self, interaction_id: str, rating: int, comment: str | None = None) -> None:
        if not isinstance(rating, int) or rating < 1 or rating > 5:
            raise ValidationError(f"rating must be an integer in 1..5, got {rating!r}")
        now = _utc_now()
        try:
            with self._write_lock, closing(self._connect()) as conn, conn:
                exists = conn.execute(
                    "SELECT 1 FROM interactions WHERE interaction_id = ?", (interaction_id,)
                ).fetchone()
                if exists is None:
                    raise NotFound(f"interaction {interaction_id!r} does not exist")
                current = conn.execute(
                    "SELECT rating, comment, rated_at FROM feedback WHERE interaction_id = ?",
                    (interaction_id,),
                ).fetchone()
                if current is not None:
                    conn.execute(
                        "INSERT INTO feedback_audit (interaction_id, rating, comment, rated_at, replaced_at)"
                        " VALUES (?, ?, ?, ?, ?)",
                        (interaction_id, current[0], current[1], current[2], now),
                    )
                    conn.execute("DELETE FROM feedback WHERE interaction_id = ?", (interaction_id,))
                conn.execute(
                    "INSERT INTO feedback (interaction_id, rating, comment, rated_at) VALUES (?, ?, ?, ?)",
                    (interaction_id, rating, comment, now),
                )
        except sqlite3.Error as exc:
            raise StorageError(f"failed to persist feedback: {exc}") from exc

    def current_rating(self, interaction_id: str) -> FeedbackRecord | None:
        with closing(self._connect()) as conn:
            row = conn.execute(
                "SELECT rating, comment, rated_at FROM feedback WHERE interaction_id = ?",
                (interaction_id,),
            ).fetchone()
        if row is None:
            return None
        return FeedbackRecord(interaction_id=interaction_id, rating=row[0], comment=row[1], rated_at=row[2])

    def feedback_audit(self, interaction_id: str) -> list[FeedbackRecord]:
        with closing(self._connect()) as conn:
            rows = conn.execute(
                "SELECT rating, comment, rated_at FROM feedback_audit"
                " WHERE interaction_id = ? ORDER BY audit_id",
                (interaction_id,),
            ).fetchall()
        return [FeedbackRecord(interaction_id, r[0], r[1], r[2]) for r in rows]

    # --- history and export -------------------------------------------------

    def session_history(self, session_id: str) -> list[dict]:
        with closing(self._connect()) as conn:
            rows = conn.execute(
                "SELECT i.interaction_id, i.session_id, i.query_text, i.answer_text, i.model_id,"
                " i.retrieval_mode, i.created_at, i.latency_ms, i.retrieved_json, f.rating, f.comment"
                " FROM interactions i LEFT JOIN feedback f ON f.interaction_id = i.interaction_id"
                " WHERE i.session_id = ? ORDER BY i.created_at, i.rowid",
                (session_id,),
            ).fetchall()
        return [_history_item(row) for row in rows]

    def export_history(self, session_id: str, format: str = "html") -> bytes:
        if format not in ("html", "md"):
            raise ValidationError(f"export format must be 'html' or 'md', got {format!r}")
        items = self.session_history(session_id)
        if not items:
            raise NotFound(f"session {session_id!r} has no interactions")
        if format == "html":
            return _render_html(session_id, items).encode("utf-8")
        return _render_markdown(session_id, items).encode("utf-8")

    def export_all_jsonl(self) -> Iterator[str]:
        """One JSON line per interaction, with current feedback and audit trail."""
        with closing(self._connect()) as conn:
            rows = conn.execute(
                "SELECT i.interaction_id, i.session_id, i.query_text, i.answer_text, i.model_id,"
                " i.retrieval_mode, i.created_at, i.latency_ms, i.retrieved_json, f.rating, f.comment, f.rated_at"
                " FROM interactions i LEFT JOIN feedback f ON f.interaction_id = i.interaction_id"
                " ORDER BY i.created_at, i.rowid"
            ).fetchall()
            for row in rows:
                audit = conn.execute(
                    "SELECT rating, comment, rated_at FROM feedback_audit"
                    " WHERE interaction_id = ? ORDER BY audit_id",
                    (row[0],),
                ).fetchall()
                yield json.dumps(
                    {
                        "interaction": {
                            "interaction_id": row[0],
                            "session_id": row[1],
                            "query_text": row[2],
                            "answer_text": row[3],
                            "model_id": row[4],
                            "retrieval_mode": row[5],
                            "created_at": row[6],
                            "latency_ms": row[7],
                            "retrieved": json.loads(row[8]),
                        },
                        "feedback": None
                        if row[9] is None
                        else {"rating": row[9], "comment": row[10], "rated_at": row[11]},
                        "audit": [{"rating": a[0], "comment": a[1], "rated_at": a[2]} for a in audit],
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )

    def count_interactions(self) -> int:
        with closing(self._connect()) as conn:
            return conn.execute("SELECT COUNT(*) FROM interactions").fetchone()[0]


def _interaction_from_row(row) -> InteractionRecord:
    return InteractionRecord(
        interaction_id=row[0],
        session_id=row[1],
        query_text=row[2],
        answer_text=row[3],
        model_id=row[4],
        retrieval_mode=row[5],
        created_at=row[6],
        latency_ms=row[7],
        retrieved=[(cid, score) for cid, score in json.loads(row[8])],
    )


def _history_item(row) -> dict:
    return {
        "interaction_id": row[0],
        "session_id": row[1],
        "query_text": row[2],
        "answer_text": row[3],
        "model_id": row[4],
        "retrieval_mode": row[5],
        "created_at": row[6],
        "latency_ms": row[7],
        "retrieved": [{"chunk_id": cid, "score": score} for cid, score in json.loads(row[8])],
        "rating": row[9],
        "comment": row[10],
    }


_HTML_STYLE = (
    "body{font-family:sans-serif;max-width:50em;margin:2em auto;padding:0 1em}"
    "h2{border-top:1px solid #999;padding-top:1em}"
    ".answer{white-space:pre-wrap;background:#f6f6f6;padding:0.8em}"
    ".meta{color:#555;font-size:0.9em}"
    "@media print{h2{page-break-before:always}}"
)


def _render_html(session_id: str, items: list[dict]) -> str:
    parts = [
        "<!doctype html>",
        '<html><head><meta charset="utf-8">',
        f"<title>Conversation {html.escape(session_id)}</title>",
        f"<style>{_HTML_STYLE}</style></head><body>",
        f"<h1>Conversation history</h1><p class=\"meta\">Session {html.escape(session_id)}</p>",
    ]
    for n, item in enumerate(items, start=1):
        rating = f"{item['rating']}/5" if item["rating"] is not None else "unrated"
        sources = "".join(
            f"<li>{html.escape(s['chunk_id'])} (score {s['score']:.4f})</li>" for s in item["retrieved"]
        )
        parts.append(
            f"<h2>Q{n}: {html.escape(item['query_text'])}</h2>"
            f"<p class=\"meta\">{html.escape(item['created_at'])} · model {html.escape(item['model_id'])}"
            f" · {item['latency_ms']} ms · rating {html.escape(rating)}</p>"
            f"<div class=\"answer\">{html.escape(item['answer_text'])}</div>"
            f"<h3>Sources</h3><ul>{sources or '<li>none</li>'}</ul>"
        )
    parts.append("</body></html>")
    return "\n".join(parts)


def _render_markdown(session_id: str, items: list[dict]) -> str:
    lines = ["# Conversation history", f"Session: `{session_id}`", ""]
    for n, item in enumerate(items, start=1):
        rating = f"{item['rating']}/5" if item["rating"] is not None else "unrated"
        lines += [
            f"## Q{n}: {item['query_text']}",
            f"*{item['created_at']} · model {item['model_id']} · {item['latency_ms']} ms · rating {rating}*",
            "",
            item["answer_text"],
            "",
            "Sources:",
        ]
        if item["retrieved"]:
            lines += [f"- {s['chunk_id']} (score {s['score']:.4f})" for s in item["retrieved"]]
        else:
            lines.append("- none")
        lines.append("")
    return "\n".join(lines)
