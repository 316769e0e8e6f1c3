import type { DecisionRequest, DecisionResponse, QueueItem, Stats } from "./types";

/** The three review API routes; everything the UI may touch. */
export interface ReviewApi {
  fetchQueue(limit: number): Promise<QueueItem[]>;
  postDecision(req: DecisionRequest): Promise<DecisionResponse>;
  fetchStats(): Promise<Stats>;
}

/** Another operator decided this item first; refresh and re-prompt. */
export class ConflictError extends Error {
  constructor(detail: string) {
    super(detail);
    this.name = "ConflictError";
  }
}

export class HttpApi implements ReviewApi {
  constructor(private base: string = "") {}

  async fetchQueue(limit: number): Promise<QueueItem[]> {
    const resp = await fetch(`${this.base}/api/queue?limit=${limit}`);
    if (!resp.ok) throw new Error(`queue fetch failed: ${resp.status}`);
    return resp.json();
  }

  async postDecision(req: DecisionRequest): Promise<DecisionResponse> {
    const resp = await fetch(`${this.base}/api/decision`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(req),
    });
    if (resp.status === 409) {
      const body = await resp.json().catch(() => ({ detail: "conflict" }));
      throw new ConflictError(body.detail ?? "conflict");
    }
    if (!resp.ok) throw new Error(`decision failed: ${resp.status}`);
    return resp.json();
  }

  async fetchStats(): Promise<Stats> {
    const resp = await fetch(`${this.base}/api/stats`);
    if (!resp.ok) throw new Error(`stats fetch failed: ${resp.status}`);
    return resp.json();
  }
}
