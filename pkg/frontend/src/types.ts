/** Client-side mirrors of the review API schema. No invented fields. */

export type Box = [number, number, number, number]; // x1, y1, x2, y2 in pixels

export interface QueueItem {
  id: string;
  image_url: string;
  region: Box;
  description: string;
  task: string;
  label: string | null;
}

export type DecisionAction = "approve" | "edit" | "reject";

export interface DecisionRequest {
  id: string;
  action: DecisionAction;
  edited_text?: string;
}

export interface DecisionResponse {
  id: string;
  status: string;
}

export interface Stats {
  counts: Record<string, number>;
  pending: number;
}
