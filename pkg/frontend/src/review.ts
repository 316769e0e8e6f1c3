import { ConflictError, type ReviewApi } from "./api";
import type { DecisionAction, QueueItem } from "./types";

export type DecisionOutcome =
  | { kind: "ok"; status: string }
  | { kind: "conflict"; detail: string }
  | { kind: "network_error"; detail: string }
  | { kind: "busy" };

const QUEUE_BATCH = 50;

/**
 * The review loop: a local window onto the server-side pending queue.
 *
 * Decisions advance optimistically; a conflict reloads server truth and
 * re-prompts, a network failure re-queues the item locally. Only one POST
 * is in flight at a time. All state lives in memory - a refresh
 * reconverges to the server.
 */
export class ReviewSession {
  private queue: QueueItem[] = [];
  private index = 0;
  private posting = false;

  constructor(private api: ReviewApi) {}

  async load(): Promise<void> {
    this.queue = await this.api.fetchQueue(QUEUE_BATCH);
    this.index = 0;
  }

  current(): QueueItem | null {
    return this.queue[this.index] ?? null;
  }

  remaining(): number {
    return this.queue.length;
  }

  next(): void {
    if (this.index < this.queue.length - 1) this.index += 1;
  }

  prev(): void {
    if (this.index > 0) this.index -= 1;
  }

  get inFlight(): boolean {
    return this.posting;
  }

  /** Post one decision for the current item; serialized. */
  async decide(action: DecisionAction, editedText?: string): Promise<DecisionOutcome> {
    if (this.posting) return { kind: "busy" };
    const item = this.current();
    if (item === null) return { kind: "network_error", detail: "queue is empty" };

    this.posting = true;
    // optimistic: drop the item locally and show the next one
    const position = this.index;
    this.queue.splice(position, 1);
    if (this.index >= this.queue.length) this.index = Math.max(0, this.queue.length - 1);

    try {
      const body =
        action === "edit"
          ? { id: item.id, action, edited_text: editedText ?? item.description }
          : { id: item.id, action };
      const resp = await this.api.postDecision(body);
      if (this.queue.length === 0) await this.load();
      return { kind: "ok", status: resp.status };
    } catch (err) {
      if (err instanceof ConflictError) {
        // someone else decided it; reconverge to server truth and re-prompt
        await this.load();
        return { kind: "conflict", detail: err.message };
      }
      // network failure: roll back, keep the item for a retry
      this.queue.splice(position, 0, item);
      this.index = position;
      return { kind: "network_error", detail: err instanceof Error ? err.message : String(err) };
    } finally {
      this.posting = false;
    }
  }
}
