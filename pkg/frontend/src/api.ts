/** Typed client for the consultation service HTTP+JSON API. */

export interface SymptomReport {
  symptom: string;
  present: boolean;
}

export interface HistoryEntry {
  symptom: string;
  answer: "yes" | "no";
}

export interface DiagnosisEntry {
  disease: string;
  prob: number;
}

export interface SessionView {
  id: string;
  turn: number;
  max_turns: number;
  done: boolean;
  reports: SymptomReport[];
  history: HistoryEntry[];
  next: { symptom: string } | null;
  diagnosis: DiagnosisEntry[] | null;
}

export interface SessionSummary {
  id: string;
  turn: number;
  max_turns: number;
  done: boolean;
}

export interface Health {
  status: string;
  variant: string;
  n_symptoms: number;
  n_diseases: number;
  max_turns: number;
  catalog: string;
}

export interface Catalog {
  symptoms: string[];
  diseases: string[];
  max_turns: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
  }
}

/** The service rejected the request; the session itself is fine. */
export function isConflict(err: unknown): boolean {
  return err instanceof ApiError && err.status === 409;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string = "",
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.baseUrl + path, {
        headers: { "content-type": "application/json" },
        ...init,
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const body = await response.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        // keep the status-line detail
      }
      throw new ApiError(response.status, detail);
    }
    if (response.status === 204) return undefined as T;
    return (await response.json()) as T;
  }

  health(): Promise<Health> {
    return this.request<Health>("/health");
  }

  /** Catalog path comes from health so the service stays authoritative. */
  catalog(path: string = "/catalog"): Promise<Catalog> {
    return this.request<Catalog>(path);
  }

  createSession(reports: SymptomReport[]): Promise<SessionView> {
    return this.request<SessionView>("/sessions", {
      method: "POST",
      body: JSON.stringify({ reports }),
    });
  }

  getSession(id: string): Promise<SessionView> {
    return this.request<SessionView>(`/sessions/${encodeURIComponent(id)}`);
  }

  listSessions(): Promise<{ sessions: SessionSummary[] }> {
    return this.request<{ sessions: SessionSummary[] }>("/sessions");
  }

  deleteSession(id: string): Promise<void> {
    return this.request<void>(`/sessions/${encodeURIComponent(id)}`, {
      method: "DELETE",
    });
  }

  /** ``turn`` echoes the client's view; a stale value gets a 409 instead
   * of advancing the session twice. */
  answer(id: string, answer: "yes" | "no", turn: number): Promise<SessionView> {
    return this.request<SessionView>(
      `/sessions/${encodeURIComponent(id)}/answer`,
      { method: "POST", body: JSON.stringify({ answer, turn }) },
    );
  }
}
