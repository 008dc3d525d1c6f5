// Typed client for the service's JSON + event-stream API. The query
// endpoint is a POST, so streaming uses fetch + ReadableStream parsing
// instead of EventSource (which only supports GET).

import type { DonePayload, ModelsResponse, QueryBody, SourceView, StreamHandlers } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: string };
    return body.detail ?? `HTTP ${response.status}`;
  } catch {
    return `HTTP ${response.status}`;
  }
}

interface SseFrame {
  event: string;
  data: string;
}

function parseFrame(frame: string): SseFrame | null {
  let event = "message";
  const dataLines: string[] = [];
  for (const rawLine of frame.split(/\r?\n/)) {
    if (rawLine.startsWith("event:")) {
      event = rawLine.slice(6).trim();
    } else if (rawLine.startsWith("data:")) {
      dataLines.push(rawLine.slice(5).trim());
    }
  }
  if (dataLines.length === 0) return null;
  return { event, data: dataLines.join("\n") };
}

/**
 * Open the query stream and dispatch named events until `done`.
 *
 * Resolves true when the stream finished with a `done` event; resolves
 * false when it dropped mid-answer (handlers.onError already called, any
 * streamed partial text stays rendered). Non-2xx responses reject with
 * ApiError before anything streams.
 */
export async function streamQuery(
  baseUrl: string,
  body: QueryBody,
  handlers: StreamHandlers,
  signal?: AbortSignal,
): Promise<boolean> {
  const response = await fetch(`${baseUrl}/api/query`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
    signal,
  });
  if (!response.ok) {
    throw new ApiError(response.status, await errorDetail(response));
  }
  if (!response.body) {
    throw new ApiError(0, "response has no body to stream");
  }

  const reader = response.body.getReader();
  const decoder = new TextDecoder("utf-8");
  let buffer = "";
  let sawDone = false;

  const dispatch = (frame: SseFrame): void => {
    switch (frame.event) {
      case "sources":
        handlers.onSources(JSON.parse(frame.data) as SourceView[]);
        break;
      case "token":
        handlers.onToken((JSON.parse(frame.data) as { text: string }).text);
        break;
      case "done":
        sawDone = true;
        handlers.onDone(JSON.parse(frame.data) as DonePayload);
        break;
      case "error":
        handlers.onError((JSON.parse(frame.data) as { message: string }).message);
        break;
    }
  };

  try {
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      const frames = buffer.split(/\r?\n\r?\n/);
      buffer = frames.pop() ?? "";
      for (const raw of frames) {
        const frame = parseFrame(raw);
        if (frame) dispatch(frame);
        if (sawDone) return true;
      }
    }
  } catch (exc) {
    handlers.onError(exc instanceof Error ? exc.message : String(exc));
    return false;
  }
  if (!sawDone) {
    handlers.onError("stream ended before the answer completed");
  }
  return sawDone;
}

export async function postFeedback(
  baseUrl: string,
  interactionId: string,
  rating: number,
  comment?: string,
): Promise<void> {
  const response = await fetch(`${baseUrl}/api/feedback`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ interaction_id: interactionId, rating, ...(comment ? { comment } : {}) }),
  });
  if (!response.ok) {
    throw new ApiError(response.status, await errorDetail(response));
  }
}

export async function fetchModels(baseUrl: string): Promise<ModelsResponse> {
  const response = await fetch(`${baseUrl}/api/models`);
  if (!response.ok) {
    throw new ApiError(response.status, await errorDetail(response));
  }
  return (await response.json()) as ModelsResponse;
}

export function exportUrl(baseUrl: string, sessionId: string, format: "html" | "md" = "html"): string {
  return `${baseUrl}/api/export/${encodeURIComponent(sessionId)}?format=${format}`;
}
