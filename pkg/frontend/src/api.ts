/** Typed client for the annotation service (/api/v1). */

export type Cell = string | number | null;

export interface ForeignKeyView {
  table: string;
  column: string;
  ref_table: string;
  ref_column: string;
}

export interface TableView {
  name: string;
  description: string;
  columns: string[];
  rows: Cell[][];
}

export interface OptionView {
  id: string;
  columns: string[];
  rows: Cell[][];
  ordered: boolean;
}

export interface QuestionView {
  id: string;
  schema: { id: string; overview: string; foreign_keys: ForeignKeyView[] };
  tables: TableView[];
  options: OptionView[];
  none_option_id: string;
  timeout_response_id: string;
}

export interface NextView {
  session_id: string;
  done: boolean;
  utterance?: { id: string; text: string };
  unit_progress?: { position: number; total: number };
  round?: number;
  max_rounds?: number;
  timer_seconds?: number;
  question?: QuestionView;
}

export interface ResponseBody {
  question_id: string;
  response: string;
  free_text_ambiguous?: string | null;
  free_text_confusing?: string | null;
  free_text_none_reason?: string | null;
  elapsed_ms?: number;
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function request<T>(url: string, init?: RequestInit): Promise<T> {
  let resp: Response;
  try {
    resp = await fetch(url, init);
  } catch (err) {
    throw new ApiError(0, `network failure: ${String(err)}`);
  }
  if (!resp.ok) {
    const text = await resp.text();
    throw new ApiError(resp.status, text);
  }
  return (await resp.json()) as T;
}

export class ApiClient {
  constructor(private base: string = "") {}

  createSession(annotatorId: string, unitId: string) {
    return request<{ session_id: string; unit_id: string; utterance_ids: string[] }>(
      `${this.base}/api/v1/sessions`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ annotator_id: annotatorId, unit_id: unitId }),
      },
    );
  }

  next(sessionId: string) {
    return request<NextView>(`${this.base}/api/v1/sessions/${sessionId}/next`);
  }

  submit(sessionId: string, body: ResponseBody) {
    return request<NextView>(`${this.base}/api/v1/sessions/${sessionId}/responses`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  posterior(utteranceId: string) {
    return request<{ utterance_id: string; posterior: { cluster_id: string; sql: string; weight: number }[] }>(
      `${this.base}/api/v1/utterances/${utteranceId}/posterior`,
    );
  }

  async exportAnnotations(): Promise<string> {
    const resp = await fetch(`${this.base}/api/v1/export/annotations`);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return resp.text();
  }
}
