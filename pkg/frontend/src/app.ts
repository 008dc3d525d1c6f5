// Single-page chat client for the question-answering service. Speaks only
// the documented JSON/event-stream API; no server-side rendering.

import { ApiError, exportUrl, fetchModels, postFeedback, streamQuery } from "./api.js";
import { CATALOG_LANGUAGES, type LanguageTag, t } from "./i18n.js";
import { createRatingWidget } from "./rating.js";
import type { DonePayload, SourceView } from "./types.js";

export interface AppOptions {
  baseUrl?: string;
  sessionId?: string;
  language?: LanguageTag;
}

export interface App {
  element: HTMLElement;
  ready: Promise<void>;
  setLanguage: (tag: LanguageTag) => void;
  readonly language: LanguageTag;
  readonly sessionId: string;
}

export function createApp(root: HTMLElement, options: AppOptions = {}): App {
  const baseUrl = options.baseUrl ?? "";
  const sessionId = options.sessionId ?? crypto.randomUUID();
  let language: LanguageTag = options.language ?? "fi";
  let modelId: string | undefined;
  let streaming = false;

  root.innerHTML = `
    <header class="topbar">
      <h1 data-i18n="app_title"></h1>
      <label class="control"><span data-i18n="language_label"></span>
        <select class="language-select">
          ${CATALOG_LANGUAGES.map((tag) => `<option value="${tag}">${tag}</option>`).join("")}
        </select>
      </label>
      <label class="control"><span data-i18n="model_label"></span>
        <select class="model-select"></select>
      </label>
      <a class="export-link" target="_blank" data-i18n="export"></a>
    </header>
    <main class="chat-log"></main>
    <div class="banner error" hidden></div>
    <form class="ask-form">
      <textarea class="question-input" rows="3" data-i18n-placeholder="question_placeholder"></textarea>
      <button type="submit" class="send" data-i18n="send"></button>
    </form>
    <div class="toast" hidden></div>
  `;

  const chatLog = root.querySelector(".chat-log") as HTMLElement;
  const form = root.querySelector(".ask-form") as HTMLFormElement;
  const questionInput = root.querySelector(".question-input") as HTMLTextAreaElement;
  const sendButton = root.querySelector(".send") as HTMLButtonElement;
  const banner = root.querySelector(".banner.error") as HTMLElement;
  const toast = root.querySelector(".toast") as HTMLElement;
  const languageSelect = root.querySelector(".language-select") as HTMLSelectElement;
  const modelSelect = root.querySelector(".model-select") as HTMLSelectElement;
  const exportLink = root.querySelector(".export-link") as HTMLAnchorElement;
  exportLink.href = exportUrl(baseUrl, sessionId, "html");

  const applyLanguage = (): void => {
    languageSelect.value = language;
    root.querySelectorAll<HTMLElement>("[data-i18n]").forEach((node) => {
      node.textContent = t(language, node.dataset.i18n ?? "");
    });
    root.querySelectorAll<HTMLElement>("[data-i18n-placeholder]").forEach((node) => {
      node.setAttribute("placeholder", t(language, node.dataset.i18nPlaceholder ?? ""));
    });
  };

  const showBanner = (message: string): void => {
    banner.textContent = message;
    banner.hidden = false;
  };

  const showToast = (message: string): void => {
    toast.textContent = message;
    toast.hidden = false;
  };

  const setStreaming = (value: boolean): void => {
    streaming = value;
    sendButton.disabled = value;
    questionInput.disabled = value;
    form.dataset.state = value ? "streaming" : "idle";
  };

  const renderSources = (container: HTMLElement, sources: SourceView[]): void => {
    const heading = document.createElement("h3");
    heading.dataset.i18n = "sources_heading";
    heading.textContent = t(language, "sources_heading");
    container.appendChild(heading);
    if (sources.length === 0) {
      const none = document.createElement("p");
      none.dataset.i18n = "no_sources";
      none.textContent = t(language, "no_sources");
      container.appendChild(none);
      return;
    }
    const list = document.createElement("ol");
    for (const source of sources) {
      const item = document.createElement("li");
      item.dataset.chunkId = source.chunk_id;
      item.textContent = `${source.title} (${source.source_path}) · ${source.score.toFixed(3)}`;
      list.appendChild(item);
    }
    container.appendChild(list);
  };

  const ask = async (question: string): Promise<void> => {
    banner.hidden = true;
    toast.hidden = true;
    setStreaming(true);

    const turn = document.createElement("section");
    turn.className = "turn";
    const questionNode = document.createElement("p");
    questionNode.className = "question";
    questionNode.textContent = question;
    const sourcesNode = document.createElement("div");
    sourcesNode.className = "sources";
    const answerNode = document.createElement("div");
    answerNode.className = "answer";
    turn.append(questionNode, sourcesNode, answerNode);
    chatLog.appendChild(turn);

    let streamedAnswer = "";
    const rating = createRatingWidget(async (value) => {
      const interactionId = turn.dataset.interactionId;
      if (!interactionId) throw new Error("answer is not rateable yet");
      try {
        await postFeedback(baseUrl, interactionId, value);
      } catch (exc) {
        showToast(t(language, "rating_failed"));
        throw exc;
      }
    });
    rating.element.title = t(language, "rate_prompt");

    const finalize = (done: DonePayload): void => {
      turn.dataset.interactionId = done.interaction_id ?? "";
      if (done.truncated) {
        const note = document.createElement("p");
        note.className = "truncated";
        note.dataset.i18n = "truncated_note";
        note.textContent = t(language, "truncated_note");
        turn.appendChild(note);
      }
      turn.appendChild(rating.element);
      if (done.interaction_id) rating.enable();
    };

    const addRetry = (): void => {
      const retry = document.createElement("button");
      retry.type = "button";
      retry.className = "retry";
      retry.dataset.i18n = "retry";
      retry.textContent = t(language, "retry");
      retry.addEventListener("click", () => {
        retry.remove();
        void ask(question);
      });
      turn.appendChild(retry);
    };

    try {
      await streamQuery(
        baseUrl,
        { session_id: sessionId, question, model_id: modelId, language },
        {
          onSources: (sources) => renderSources(sourcesNode, sources),
          onToken: (text) => {
            streamedAnswer += text;
            answerNode.textContent = streamedAnswer;
          },
          onDone: finalize,
          onError: (message) => {
            turn.classList.add("aborted");
            turn.title = message;
            addRetry();
          },
        },
      );
      questionInput.value = "";
    } catch (exc) {
      // Pre-stream failure: keep the input so the user can edit and resend.
      turn.remove();
      const detail = exc instanceof ApiError ? exc.message : t(language, "error_query_failed");
      showBanner(detail);
    } finally {
      setStreaming(false);
    }
  };

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (streaming) return;
    const question = questionInput.value.trim();
    if (!question) {
      showBanner(t(language, "error_blank_question"));
      return;
    }
    void ask(question);
  });

  languageSelect.addEventListener("change", () => {
    setLanguage(languageSelect.value as LanguageTag);
  });

  modelSelect.addEventListener("change", () => {
    modelId = modelSelect.value || undefined;
  });

  const setLanguage = (tag: LanguageTag): void => {
    language = tag;
    applyLanguage();
  };

  const ready = fetchModels(baseUrl)
    .then((registry) => {
      modelSelect.innerHTML = "";
      for (const model of registry.models) {
        const option = document.createElement("option");
        option.value = model.model_id;
        option.textContent = `${model.model_id} (${model.max_answer_tokens})`;
        modelSelect.appendChild(option);
      }
      modelSelect.value = registry.default_model;
      modelId = registry.default_model;
    })
    .catch(() => {
      // Model selection stays empty; queries fall back to the server default.
      modelId = undefined;
    });

  applyLanguage();

  return {
    element: root,
    ready,
    setLanguage,
    get language() {
      return language;
    },
    sessionId,
  };
}
