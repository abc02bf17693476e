/** Shared types for the annotation console.
 *
 * The *Snapshot / *Payload interfaces mirror the service JSON verbatim,
 * snake_case keys included, so fixtures recorded from the live service
 * typecheck without any mapping layer. The camelCase view types are what
 * the console itself works with.
 */

export type Level = "low" | "medium" | "high";

export const LEVELS: readonly Level[] = ["low", "medium", "high"];

export type SessionStatus = "awaiting_labels" | "retraining" | "complete";

/** One point on the labels-vs-auroc curve, as the service reports it. */
export interface CurvePoint {
  episode: number;
  labels_used: number;
  auroc: number;
}

/** GET /v1/sessions/{token} response body. */
export interface SessionSnapshot {
  token: string;
  status: SessionStatus;
  student_id: string;
  episode: number;
  episodes_total: number;
  batch_size: number;
  labels_collected: number;
  labels_target: number;
  auroc_curve: CurvePoint[];
}

/** One unlabeled sample inside a batch response. */
export interface BatchItem {
  pool_id: number;
  clip_ref: string;
  second: number;
}

/** GET /v1/sessions/{token}/batch response body. */
export interface BatchPayload {
  token: string;
  status: SessionStatus;
  episode: number;
  batch: BatchItem[];
}

/** Error body the service returns with every non-2xx status. */
export interface ErrorEnvelope {
  code: string;
  message: string;
}

/** One labelable card on screen. `level` stays null until the user picks. */
export interface SampleCard {
  poolId: number;
  clipRef: string;
  second: number;
  level: Level | null;
}

/**
 * Everything the console shows for one session. All numbers come straight
 * from the latest server snapshot; the only local state is which level the
 * user has picked on each card.
 */
export interface SessionView {
  token: string;
  status: SessionStatus;
  studentId: string;
  episode: number;
  episodesTotal: number;
  batchSize: number;
  labelsCollected: number;
  labelsTarget: number;
  curve: CurvePoint[];
  cards: SampleCard[];
}
