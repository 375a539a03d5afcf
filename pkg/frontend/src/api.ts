import type {
  ApiErrorBody,
  AttendanceRecord,
  PersonRecord,
  RecognitionEvent,
  Session,
} from "./types.js";

export class ApiError extends Error {
  code: string;
  status: number;

  constructor(body: ApiErrorBody) {
    super(body.message);
    this.code = body.code;
    this.status = body.http_status;
  }
}

async function asError(resp: Response): Promise<ApiError> {
  try {
    return new ApiError((await resp.json()) as ApiErrorBody);
  } catch {
    return new ApiError({ code: "HTTP_" + resp.status, message: resp.statusText, http_status: resp.status });
  }
}

// Thin typed wrapper over the service endpoints. fetch is injected so the
// client runs identically in the browser and under node tests.
export class ApiClient {
  constructor(
    private base: string,
    private fetchFn: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) throw await asError(resp);
    return (await resp.json()) as T;
  }

  registerPerson(id: string, name: string): Promise<PersonRecord> {
    return this.json("/api/persons", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ id, name }),
    });
  }

  uploadSample(id: string, ppm: Uint8Array): Promise<{ stored: boolean; sample_count: number }> {
    return this.json(`/api/persons/${id}/samples`, {
      method: "POST",
      headers: { "Content-Type": "image/x-portable-pixmap" },
      body: ppm as unknown as BodyInit,
    });
  }

  finalizePerson(id: string, kMin?: number): Promise<PersonRecord> {
    return this.json(`/api/persons/${id}/finalize`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(kMin === undefined ? {} : { k_min: kMin }),
    });
  }

  status(): Promise<{ models_ready: boolean; persons: number; sessions: number; cascade_installed: boolean }> {
    return this.json("/api/status");
  }

  startSession(name: string, debounceS: number | null, startedAt?: string): Promise<Session> {
    const body: Record<string, unknown> = { name, debounce_s: debounceS };
    if (startedAt !== undefined) body.started_at = startedAt;
    return this.json("/api/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  pushFrame(sessionId: string, ppm: Uint8Array, timestamp: string): Promise<{ events: RecognitionEvent[] }> {
    return this.json(`/api/sessions/${sessionId}/frames`, {
      method: "POST",
      headers: { "Content-Type": "image/x-portable-pixmap", "X-Timestamp": timestamp },
      body: ppm as unknown as BodyInit,
    });
  }

  endSession(sessionId: string): Promise<{ session_id: string; persons_marked: number; total_events: number }> {
    return this.json(`/api/sessions/${sessionId}/end`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{}",
    });
  }

  listSessions(): Promise<{ sessions: Session[] }> {
    return this.json("/api/sessions");
  }

  sessionRecords(sessionId: string): Promise<{ records: AttendanceRecord[] }> {
    return this.json(`/api/sessions/${sessionId}/records`);
  }

  exportCsvUrl(sessionId: string): string {
    return `${this.base}/api/sessions/${sessionId}/export.csv`;
  }

  eventStreamUrl(sessionId: string): string {
    return `${this.base}/api/sessions/${sessionId}/events`;
  }

  async fetchCsv(sessionId: string): Promise<Uint8Array> {
    const resp = await this.fetchFn(this.exportCsvUrl(sessionId));
    if (!resp.ok) throw await asError(resp);
    return new Uint8Array(await resp.arrayBuffer());
  }
}
