import { vi } from "vitest";
import type { ModelsResponse } from "../src/types.js";

export const sseEvent = (name: string, data: unknown): string =>
  `event: ${name}\ndata: ${JSON.stringify(data)}\n\n`;

export function sseResponse(frames: string[], status = 200): Response {
  const encoder = new TextEncoder();
  const stream = new ReadableStream<Uint8Array>({
    start(controller) {
      for (const frame of frames) controller.enqueue(encoder.encode(frame));
      controller.close();
    },
  });
  return new Response(stream, { status, headers: { "Content-Type": "text/event-stream" } });
}

export interface ManualStream {
  response: Response;
  push: (text: string) => void;
  close: () => void;
  fail: (error?: Error) => void;
}

export function manualSse(): ManualStream {
  let controller!: ReadableStreamDefaultController<Uint8Array>;
  const stream = new ReadableStream<Uint8Array>({
    start(c) {
      controller = c;
    },
  });
  const encoder = new TextEncoder();
  return {
    response: new Response(stream, { status: 200, headers: { "Content-Type": "text/event-stream" } }),
    push: (text) => controller.enqueue(encoder.encode(text)),
    close: () => controller.close(),
    fail: (error) => controller.error(error ?? new Error("connection dropped")),
  };
}

export interface FetchCall {
  url: string;
  init?: RequestInit;
  body?: unknown;
}

export interface FetchRoutes {
  models?: ModelsResponse | (() => Response);
  query?: () => Response | Promise<Response>;
  feedback?: (body: { interaction_id: string; rating: number }) => Response;
}

export const DEFAULT_MODELS: ModelsResponse = {
  models: [
    { model_id: "model-a", max_answer_tokens: 2000 },
    { model_id: "model-b", max_answer_tokens: 700 },
  ],
  default_model: "model-a",
};

export function stubFetch(routes: FetchRoutes = {}) {
  const calls: FetchCall[] = [];
  const fn = vi.fn(async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const call: FetchCall = { url, init };
    if (init?.body) {
      try {
        call.body = JSON.parse(String(init.body));
      } catch {
        call.body = init.body;
      }
    }
    calls.push(call);
    if (url.includes("/api/models")) {
      const models = routes.models ?? DEFAULT_MODELS;
      return typeof models === "function" ? models() : Response.json(models);
    }
    if (url.includes("/api/query")) {
      if (!routes.query) return sseResponse([]);
      return routes.query();
    }
    if (url.includes("/api/feedback")) {
      if (!routes.feedback) return new Response(null, { status: 204 });
      return routes.feedback(call.body as { interaction_id: string; rating: number });
    }
    return new Response(JSON.stringify({ detail: "not found" }), { status: 404 });
  });
  vi.stubGlobal("fetch", fn);
  return { fn, calls };
}

export const queryCalls = (calls: FetchCall[]): FetchCall[] => calls.filter((c) => c.url.includes("/api/query"));
export const feedbackCalls = (calls: FetchCall[]): FetchCall[] =>
  calls.filter((c) => c.url.includes("/api/feedback"));
