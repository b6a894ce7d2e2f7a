import type { GazeSample, LayoutJson, Prediction, VocabEntry } from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceError extends Error {
  constructor(message: string, public readonly status: number) {
    super(message);
  }
}

/** Typed client for the session service; the only way the UI touches state. */
export class ServiceClient {
  private readonly fetchFn: FetchLike;

  constructor(
    public readonly baseUrl: string,
    opts: { fetchFn?: FetchLike; authToken?: string } = {},
  ) {
    this.fetchFn = opts.fetchFn ?? ((url, init) => fetch(url, init));
    this.authToken = opts.authToken;
  }

  private readonly authToken?: string;

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.authToken) headers["authorization"] = `Bearer ${this.authToken}`;
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = typeof payload?.detail === "string" ? payload.detail : resp.statusText;
      throw new ServiceError(detail, resp.status);
    }
    return payload;
  }

  async createSession(userId: string, layout: LayoutJson): Promise<string> {
    const out = await this.request("POST", "/sessions", { user_id: userId, layout });
    return out.session_id as string;
  }

  async appendGaze(sessionId: string, samples: GazeSample[]): Promise<number> {
    const out = await this.request("POST", `/sessions/${sessionId}/gaze`, { samples });
    return out.accepted as number;
  }

  async markWords(sessionId: string, words: number[]): Promise<number[]> {
    const out = await this.request("POST", `/sessions/${sessionId}/marks`, { words });
    return out.marked as number[];
  }

  async closeSession(sessionId: string): Promise<Prediction[]> {
    const out = await this.request("POST", `/sessions/${sessionId}/close`);
    return out.predictions as Prediction[];
  }

  async getPredictions(sessionId: string): Promise<Prediction[]> {
    const out = await this.request("GET", `/sessions/${sessionId}/predictions`);
    return out.predictions as Prediction[];
  }

  async getVocab(userId: string): Promise<VocabEntry[]> {
    const out = await this.request("GET", `/users/${userId}/vocab`);
    return out.vocab as VocabEntry[];
  }
}

/** Service base URL from the page URL (?service=...), with a local default. */
export function serviceUrlFromLocation(search: string, fallback = "http://127.0.0.1:8600"): string {
  const params = new URLSearchParams(search);
  const url = params.get("service");
  return url && url.length > 0 ? url.replace(/\/$/, "") : fallback;
}
