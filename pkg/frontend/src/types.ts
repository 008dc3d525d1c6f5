export interface SourceView {
  chunk_id: string;
  title: string;
  source_path: string;
  score: number;
}

export interface DonePayload {
  interaction_id: string | null;
  latency_ms: number;
  truncated: boolean;
}

export interface ModelInfo {
  model_id: string;
  max_answer_tokens: number;
}

export interface ModelsResponse {
  models: ModelInfo[];
  default_model: string;
}

export interface QueryBody {
  session_id: string;
  question: string;
  model_id?: string;
  language?: string;
}

export interface StreamHandlers {
  onSources: (sources: SourceView[]) => void;
  onToken: (text: string) => void;
  onDone: (done: DonePayload) => void;
  onError: (message: string) => void;
}
