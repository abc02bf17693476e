/** Test plumbing: fixture loading and transports with scripted replies.
 *
 * The fixtures under test/fixtures were recorded against the live labeling
 * service, one JSON object per HTTP exchange. FixturePlayer feeds them back
 * in order and fails the test the moment the console sends anything that
 * differs from the recorded traffic, so these tests double as a wire-format
 * contract check.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { Transport, TransportResult } from "../src/api";
import type { ConsoleState } from "../src/controller";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export interface Exchange {
  method: string;
  path: string;
  request: unknown;
  status: number;
  response: unknown;
}

export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

export function loadReplay(): Exchange[] {
  return loadFixture<Exchange[]>("replay.json");
}

export function deepEqual(a: unknown, b: unknown): boolean {
  if (Object.is(a, b)) {
    return true;
  }
  if (typeof a !== typeof b || a === null || b === null) {
    return false;
  }
  if (Array.isArray(a) || Array.isArray(b)) {
    if (!Array.isArray(a) || !Array.isArray(b) || a.length !== b.length) {
      return false;
    }
    return a.every((item, i) => deepEqual(item, b[i]));
  }
  if (typeof a === "object") {
    const left = a as Record<string, unknown>;
    const right = b as Record<string, unknown>;
    const keysA = Object.keys(left).sort();
    const keysB = Object.keys(right).sort();
    if (keysA.length !== keysB.length || keysA.some((k, i) => k !== keysB[i])) {
      return false;
    }
    return keysA.every((k) => deepEqual(left[k], right[k]));
  }
  return false;
}

/** Serves recorded exchanges in order, verifying each outgoing request. */
export class FixturePlayer {
  private cursor = 0;

  constructor(readonly exchanges: Exchange[]) {}

  readonly transport: Transport = async (method, path, body) => {
    const expected = this.exchanges[this.cursor];
    if (expected === undefined) {
      throw new Error(`fixture exhausted, unexpected ${method} ${path}`);
    }
    this.cursor += 1;
    if (expected.method !== method || expected.path !== path) {
      throw new Error(
        `fixture expected ${expected.method} ${expected.path}, got ${method} ${path}`,
      );
    }
    const sent = body === undefined ? null : body;
    const recorded = expected.request === undefined ? null : expected.request;
    if (!deepEqual(sent, recorded)) {
      throw new Error(
        `request body mismatch on ${method} ${path}:\n` +
          `sent     ${JSON.stringify(sent)}\n` +
          `recorded ${JSON.stringify(recorded)}`,
      );
    }
    return { status: expected.status, body: expected.response };
  };

  get consumed(): number {
    return this.cursor;
  }

  get drained(): boolean {
    return this.cursor === this.exchanges.length;
  }

  /** Upcoming exchange without consuming it. */
  peek(): Exchange {
    const next = this.exchanges[this.cursor];
    if (next === undefined) {
      throw new Error("fixture exhausted");
    }
    return next;
  }
}

/** Narrow a console state to one variant, failing loudly otherwise. */
export function expectKind<K extends ConsoleState["kind"]>(
  state: ConsoleState,
  kind: K,
): Extract<ConsoleState, { kind: K }> {
  if (state.kind !== kind) {
    throw new Error(`expected console state '${kind}', got '${state.kind}'`);
  }
  return state as Extract<ConsoleState, { kind: K }>;
}

/** Await a promise that must reject, returning the rejection reason. */
export async function rejection(promise: Promise<unknown>): Promise<unknown> {
  try {
    await promise;
  } catch (err) {
    return err;
  }
  throw new Error("expected the promise to reject");
}

export type ScriptStep = (
  method: string,
  path: string,
  body: unknown,
) => TransportResult | Promise<TransportResult>;

/** Transport that pops one handler per request; throws when none are left. */
export function scriptTransport(steps: ScriptStep[]): Transport {
  const queue = [...steps];
  return async (method, path, body) => {
    const step = queue.shift();
    if (step === undefined) {
      throw new Error(`script exhausted, unexpected ${method} ${path}`);
    }
    return step(method, path, body);
  };
}
