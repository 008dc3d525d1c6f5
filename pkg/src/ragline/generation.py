"""Grounded answer generation against a chat-completions-style backend.

Prompts are rendered from per-language templates holding exactly one
``{context}`` and one ``{question}`` placeholder. Generation streams token
deltas through a callback; timeouts before the first token are retried with
fresh timers, while a drop mid-stream surfaces the partial text for logging.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone

import httpx

from .errors import BackendError, GenerationTimeout, StreamAborted, TemplateError
from .retrieval import ContextBundle

logger = logging.getLogger(__name__)

DEFAULT_ANSWER_TOKENS = 2000
LEGACY_ANSWER_TOKENS = 700
CHAT_API_KEY_ENV = "RAGLINE_CHAT_API_KEY"

NO_CONTEXT_SENTINEL = (
    "NO SUPPORTING DOCUMENTS WERE FOUND FOR THIS QUESTION. "
    "Tell the user that the document collection does not contain relevant material, "
    "and do not invent sources."
)


@dataclass(frozen=True)
class ModelProfile:
    model_id: str
    endpoint_url: str
    max_answer_tokens: int = DEFAULT_ANSWER_TOKENS
    request_timeout: float = 120.0
    stream: bool = True
    retries: int = 2
    api_key_env: str = CHAT_API_KEY_ENV

    def __post_init__(self):
        if self.max_answer_tokens < 1:
            raise ValueError(f"max_answer_tokens must be >= 1, got {self.max_answer_tokens}")
        if self.request_timeout <= 0:
            raise ValueError(f"request_timeout must be positive, got {self.request_timeout}")


class PromptTemplate:
    """A system text plus a user frame with {context} and {question} slots.

    Placeholder positions are located once at construction (TemplateError if
    either is missing or repeated), and rendering splices values in by slice
    so braces inside retrieved text can never corrupt the frame.
    """

    def __init__(self, template_id: str, language: str, system_text: str, user_frame: str):
        self.template_id = template_id
        self.language = language
        self.system_text = system_text
        self.user_frame = user_frame
        self._segments = _split_frame(template_id, user_frame)

    def render_user_text(self, context: str, question: str) -> str:
        head, between, tail, context_first = self._segments
        first, second = (context, question) if context_first else (question, context)
        return f"{head}{first}{between}{second}{tail}"


def _split_frame(template_id: str, frame: str) -> tuple[str, str, str, bool]:
    positions = []
    for name in ("{context}", "{question}"):
        count = frame.count(name)
        if count != 1:
            raise TemplateError(f"template {template_id!r} must contain {name} exactly once, found {count}")
        positions.append((frame.index(name), name))
    positions.sort()
    (first_at, first_name), (second_at, second_name) = positions
    head = frame[:first_at]
    between = frame[first_at + len(first_name) : second_at]
    tail = frame[second_at + len(second_name) :]
    return head, between, tail, first_name == "{context}"


BUILTIN_TEMPLATES: dict[str, PromptTemplate] = {
    "fi": PromptTemplate(
        template_id="grounded-fi",
        language="fi",
        system_text=(
            "Olet avustaja, joka vastaa kysymyksiin vain annetun tausta-aineiston perusteella. "
            "Viittaa lähteisiin hakasulkumerkinnöillä, esimerkiksi [S1]. "
            "Jos aineisto ei riitä, sano se suoraan."
        ),
        user_frame="Tausta-aineisto:\n{context}\nKysymys: {question}\n\nVastaa suomeksi ja mainitse käyttämäsi lähteet.",
    ),
    "sv": PromptTemplate(
        template_id="grounded-sv",
        language="sv",
        system_text=(
            "Du är en assistent som svarar på frågor enbart utifrån det bifogade källmaterialet. "
            "Hänvisa till källorna med markeringar som [S1]. "
            "Säg tydligt om materialet inte räcker till."
        ),
        user_frame="Källmaterial:\n{context}\nFråga: {question}\n\nSvara på svenska och ange vilka källor du använde.",
    ),
    "en": PromptTemplate(
        template_id="grounded-en",
        language="en",
        system_text=(
            "You are an assistant that answers questions using only the supplied source excerpts. "
            "Cite sources with markers such as [S1]. "
            "If the material is insufficient, say so plainly."
        ),
        user_frame="Source material:\n{context}\nQuestion: {question}\n\nAnswer in English and name the sources you used.",
    ),
}


def render_prompt(bundle: ContextBundle, question: str, template: PromptTemplate) -> tuple[str, str]:
    """Substitute the context bundle and question into a template.

    An empty bundle injects a fixed sentinel that instructs the model to say
    no supporting documents were found.
    """
    if not question or not question.strip():
        raise ValueError("question is blank")
    context = NO_CONTEXT_SENTINEL if bundle.no_context else bundle.context_text
    return template.system_text, template.render_user_text(context, question)


@dataclass
class GenerationResult:
    answer_text: str
    model_id: str
    started_at: str
    first_token_at: str
    finished_at: str
    latency_ms: int
    token_events: int
    truncated: bool = field(default=False)


class _PreTokenTimeout(Exception):
    """Internal: attempt timed out before any delta arrived; safe to retry."""


def _now() -> datetime:
    return datetime.now(timezone.utc)


def generate(
    system_text: str,
    user_text: str,
    profile: ModelProfile,
    on_token=None,
    cancel: threading.Event | None = None,
) -> GenerationResult:
    """Stream an answer from the backend, invoking on_token per delta.

    Timeouts with no tokens yet retry up to profile.retries times with fresh
    timers, then raise GenerationTimeout. Once streaming has begun, a timeout
    or dropped connection raises StreamAborted carrying the partial text;
    retrying at that point would duplicate already-delivered increments.
    """
    started = _now()
    attempts = 0
    while True:
        try:
            return _attempt(system_text, user_text, profile, on_token, cancel, started)
        except _PreTokenTimeout:
            attempts += 1
            if attempts > profile.retries:
                raise GenerationTimeout(
                    f"backend {profile.endpoint_url} timed out on all {attempts} attempt(s)",
                    attempts=attempts,
                )
            logger.warning("generation attempt %d timed out before first token, retrying", attempts)


def _attempt(
    system_text: str,
    user_text: str,
    profile: ModelProfile,
    on_token,
    cancel: threading.Event | None,
    started: datetime,
) -> GenerationResult:
    payload = {
        "model": profile.model_id,
        "messages": [
            {"role": "system", "content": system_text},
            {"role": "user", "content": user_text},
        ],
        "max_tokens": profile.max_answer_tokens,
        "stream": profile.stream,
    }
    headers = {}
    api_key = os.environ.get(profile.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"

    pieces: list[str] = []
    token_events = 0
    truncated = False
    first_token: datetime | None = None

    def emit(piece: str):
        nonlocal token_events, first_token
        if first_token is None:
            first_token = _now()
        pieces.append(piece)
        token_events += 1
        if on_token is not None:
            on_token(piece)

    try:
        with httpx.Client(timeout=profile.request_timeout, headers=headers) as client:
            if not profile.stream:
                response = client.post(profile.endpoint_url, json=payload)
                _check_status(response)
                choice = response.json()["choices"][0]
                content = choice.get("message", {}).get("content", "")
                if content:
                    emit(content)
                truncated = choice.get("finish_reason") == "length"
            else:
                with client.stream("POST", profile.endpoint_url, json=payload) as response:
                    _check_status(response)
                    for line in response.iter_lines():
                        if cancel is not None and cancel.is_set():
                            raise StreamAborted("generation cancelled by caller", partial_text="".join(pieces))
                        if not line.startswith("data:"):
                            continue
                        data = line[5:].strip()
                        if data == "[DONE]":
                            break
                        try:
                            event = json.loads(data)
                        except json.JSONDecodeError as exc:
                            raise StreamAborted(
                                f"malformed stream event: {exc}", partial_text="".join(pieces)
                            ) from exc
                        choice = event.get("choices", [{}])[0]
                        piece = choice.get("delta", {}).get("content")
                        if piece:
                            emit(piece)
                        if choice.get("finish_reason") == "length":
                            truncated = True
    except httpx.TimeoutException as exc:
        if token_events == 0:
            raise _PreTokenTimeout() from exc
        raise StreamAborted(f"backend stalled mid-stream: {exc}", partial_text="".join(pieces)) from exc
    except httpx.ConnectError as exc:
        raise BackendError(f"could not connect to backend {profile.endpoint_url}: {exc}") from exc
    except httpx.TransportError as exc:
        raise StreamAborted(f"connection dropped mid-stream: {exc}", partial_text="".join(pieces)) from exc

    finished = _now()
    if first_token is None:
        first_token = finished
    return GenerationResult(
        answer_text="".join(pieces),
        model_id=profile.model_id,
        started_at=started.isoformat(),
        first_token_at=first_token.isoformat(),
        finished_at=finished.isoformat(),
        latency_ms=max(0, int((finished - started).total_seconds() * 1000)),
        token_events=token_events,
        truncated=truncated,
    )


def _check_status(response: httpx.Response) -> None:
    if response.status_code // 100 == 2:
        return
    try:
        response.read()
        excerpt = response.text[:200]
    except httpx.HTTPError:
        excerpt = ""
    raise BackendError(
        f"backend returned HTTP {response.status_code}",
        status_code=response.status_code,
        body_excerpt=excerpt,
    )
