/** Thin client for the labeling service HTTP API.
 *
 * Every call goes through a Transport so tests can swap in a fixture
 * player and assert the exact request traffic.
 */

import type {
  BatchPayload,
  ErrorEnvelope,
  Level,
  SessionSnapshot,
} from "./types";

export interface TransportResult {
  status: number;
  body: unknown;
}

export type Transport = (
  method: string,
  path: string,
  body?: unknown,
) => Promise<TransportResult>;

/** The service answered with an error envelope (4xx/5xx). */
export class ServiceFailure extends Error {
  readonly code: string;
  readonly status: number;

  constructor(code: string, message: string, status: number) {
    super(message);
    this.name = "ServiceFailure";
    this.code = code;
    this.status = status;
  }
}

/** The request never produced an HTTP response (connection refused, etc.). */
export class NetworkFailure extends Error {
  constructor(message: string) {
    super(message);
    this.name = "NetworkFailure";
  }
}

/** Transport backed by the browser fetch(), for real deployments. */
export function fetchTransport(baseUrl: string): Transport {
  const root = baseUrl.replace(/\/$/, "");
  return async (method, path, body) => {
    let response: Response;
    try {
      response = await fetch(root + path, {
        method,
        headers: body === undefined ? {} : { "content-type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (err) {
      throw new NetworkFailure(err instanceof Error ? err.message : String(err));
    }
    let parsed: unknown = null;
    try {
      parsed = await response.json();
    } catch {
      parsed = null;
    }
    return { status: response.status, body: parsed };
  };
}

function isEnvelope(body: unknown): body is ErrorEnvelope {
  return (
    typeof body === "object" &&
    body !== null &&
    typeof (body as ErrorEnvelope).code === "string" &&
    typeof (body as ErrorEnvelope).message === "string"
  );
}

async function expectOk<T>(
  transport: Transport,
  method: string,
  path: string,
  body?: unknown,
): Promise<T> {
  const result = await transport(method, path, body);
  if (result.status >= 200 && result.status < 300) {
    return result.body as T;
  }
  if (isEnvelope(result.body)) {
    throw new ServiceFailure(result.body.code, result.body.message, result.status);
  }
  throw new ServiceFailure("unknown", `unexpected status ${result.status}`, result.status);
}

export function createSession(
  transport: Transport,
  studentId: string,
  options?: { episodes?: number; batchSize?: number },
): Promise<SessionSnapshot> {
  const body: Record<string, unknown> = { student_id: studentId };
  if (options?.episodes !== undefined) {
    body.episodes = options.episodes;
  }
  if (options?.batchSize !== undefined) {
    body.batch_size = options.batchSize;
  }
  return expectOk<SessionSnapshot>(transport, "POST", "/v1/sessions", body);
}

export function getStatus(transport: Transport, token: string): Promise<SessionSnapshot> {
  return expectOk<SessionSnapshot>(transport, "GET", `/v1/sessions/${token}`);
}

export function getBatch(transport: Transport, token: string): Promise<BatchPayload> {
  return expectOk<BatchPayload>(transport, "GET", `/v1/sessions/${token}/batch`);
}

export interface LabelEntry {
  pool_id: number;
  level: Level;
}

export function submitLabels(
  transport: Transport,
  token: string,
  labels: LabelEntry[],
): Promise<SessionSnapshot> {
  return expectOk<SessionSnapshot>(transport, "POST", `/v1/sessions/${token}/labels`, {
    labels,
  });
}
