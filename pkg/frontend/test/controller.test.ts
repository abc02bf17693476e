/** State-machine tests driven by scripted transports.
 *
 * Responses come from the recorded fixtures wherever possible; the
 * scripted steps only fill in what a fixture cannot express, like a
 * connection that dies mid-request.
 */

import { describe, expect, it } from "vitest";

import { NetworkFailure, type LabelEntry } from "../src/api";
import { AnnotationConsole } from "../src/controller";
import type {
  BatchPayload,
  ErrorEnvelope,
  SessionSnapshot,
} from "../src/types";
import {
  deepEqual,
  expectKind,
  loadFixture,
  loadReplay,
  scriptTransport,
  type Exchange,
  type ScriptStep,
} from "./helpers";

interface RetrainingFixture {
  status: { status: number; response: SessionSnapshot };
  batch: { status: number; response: ErrorEnvelope };
}

interface NotFoundFixture {
  status: number;
  response: ErrorEnvelope;
}

const exchanges = loadReplay();
const replayToken = (exchanges[0].response as SessionSnapshot).token;
const retrainingFixture = loadFixture<RetrainingFixture>("retraining.json");
const notFoundFixture = loadFixture<NotFoundFixture>("not_found.json");

/** Step that replays one recorded exchange, checking the request first. */
function serve(exchange: Exchange): ScriptStep {
  return (method, path, body) => {
    expect(method).toBe(exchange.method);
    expect(path).toBe(exchange.path);
    const sent = body === undefined ? null : body;
    expect(deepEqual(sent, exchange.request ?? null)).toBe(true);
    return { status: exchange.status, body: exchange.response };
  };
}

function fakeScheduler() {
  const queue: Array<{ fn: () => void; ms: number }> = [];
  return {
    queue,
    schedule: (fn: () => void, ms: number) => {
      queue.push({ fn, ms });
    },
  };
}

function recordedLabels(index: number): LabelEntry[] {
  return (exchanges[index].request as { labels: LabelEntry[] }).labels;
}

describe("polling while the service retrains", () => {
  const snapshot = retrainingFixture.status.response;
  const awaiting: SessionSnapshot = { ...snapshot, status: "awaiting_labels" };
  const pendingBatch: BatchPayload = {
    token: snapshot.token,
    status: "awaiting_labels",
    episode: snapshot.episode,
    batch: (exchanges[2].response as BatchPayload).batch,
  };

  it("enters a spinner state and schedules the next poll", async () => {
    const { queue, schedule } = fakeScheduler();
    const transport = scriptTransport([
      () => ({ status: retrainingFixture.status.status, body: snapshot }),
      () => ({ status: 200, body: snapshot }),
      () => ({ status: 200, body: awaiting }),
      () => ({ status: 200, body: pendingBatch }),
    ]);
    const console_ = new AnnotationConsole(transport, { schedule });

    await console_.open(snapshot.token);
    expect(expectKind(console_.state, "retraining").snapshot.status).toBe("retraining");
    expect(queue).toHaveLength(1);
    expect(queue[0].ms).toBe(2000);

    // still retraining: keep the spinner and schedule another poll
    await console_.poll();
    expect(console_.state.kind).toBe("retraining");
    expect(queue).toHaveLength(2);
    expect(queue[1].ms).toBe(2000);

    // training done: the poll lands back on a labelable batch
    await console_.poll();
    const labeling = expectKind(console_.state, "labeling");
    expect(labeling.view.cards).toHaveLength(10);
    expect(queue).toHaveLength(2);
  });

  it("falls back to the spinner when the batch call hits a retrain window", async () => {
    const { queue, schedule } = fakeScheduler();
    const transport = scriptTransport([
      () => ({ status: 200, body: awaiting }),
      () => ({
        status: retrainingFixture.batch.status,
        body: retrainingFixture.batch.response,
      }),
    ]);
    const console_ = new AnnotationConsole(transport, { schedule });

    await console_.open(snapshot.token);
    expect(console_.state.kind).toBe("retraining");
    expect(queue).toHaveLength(1);
  });
});

describe("token entry", () => {
  it("keeps the operator on the entry form for unknown tokens", async () => {
    const transport = scriptTransport([
      () => ({ status: notFoundFixture.status, body: notFoundFixture.response }),
    ]);
    const console_ = new AnnotationConsole(transport);

    await console_.open("absent-token");
    const entry = expectKind(console_.state, "token_entry");
    expect(entry.error).toBe(notFoundFixture.response.message);
  });

  it("treats a dead connection like a bad token, with the reason shown", async () => {
    const transport = scriptTransport([
      () => {
        throw new NetworkFailure("connection refused");
      },
    ]);
    const console_ = new AnnotationConsole(transport);

    await console_.open("whatever");
    const entry = expectKind(console_.state, "token_entry");
    expect(entry.error).toBe("connection refused");
  });
});

describe("submission failures", () => {
  async function openEpisodeZero(steps: ScriptStep[], schedule?: (fn: () => void, ms: number) => void) {
    const transport = scriptTransport([
      serve(exchanges[1]),
      serve(exchanges[2]),
      ...steps,
    ]);
    const console_ = new AnnotationConsole(transport, { schedule });
    await console_.open(replayToken);
    for (const entry of recordedLabels(4)) {
      console_.label(entry.pool_id, entry.level);
    }
    return console_;
  }

  it("keeps every label across a network failure and retries the same body", async () => {
    const console_ = await openEpisodeZero([
      () => {
        throw new NetworkFailure("connection reset");
      },
      serve(exchanges[4]),
      serve(exchanges[5]),
    ]);

    await console_.submit();
    const failed = expectKind(console_.state, "failed_submit");
    expect(failed.message).toBe("connection reset");
    expect(failed.view.cards.map((c) => c.level)).toEqual(
      recordedLabels(4).map((entry) => entry.level),
    );

    // serve(exchanges[4]) verifies the resent body equals the recording
    await console_.retry();
    const labeling = expectKind(console_.state, "labeling");
    expect(labeling.view.episode).toBe(1);
    expect(labeling.view.labelsCollected).toBe(10);
    expect(labeling.view.curve).toHaveLength(2);
  });

  it("lets the operator adjust a card after a failed submission", async () => {
    const console_ = await openEpisodeZero([
      () => {
        throw new NetworkFailure("connection reset");
      },
    ]);

    await console_.submit();
    expectKind(console_.state, "failed_submit");
    const first = recordedLabels(4)[0];
    console_.label(first.pool_id, "low");
    const labeling = expectKind(console_.state, "labeling");
    expect(labeling.banner).toBeNull();
    expect(labeling.view.cards[0].level).toBe("low");
  });

  it("surfaces a validation rejection without losing the selections", async () => {
    const envelope = exchanges[3].response as ErrorEnvelope;
    const console_ = await openEpisodeZero([
      () => ({ status: 400, body: envelope }),
    ]);

    await console_.submit();
    const labeling = expectKind(console_.state, "labeling");
    expect(labeling.banner).toBe(envelope.message);
    expect(labeling.offending).toEqual(labeling.view.cards.map((c) => c.poolId));
    expect(labeling.view.cards.every((c) => c.level !== null)).toBe(true);
  });

  it("resynchronizes from the server when another writer wins the race", async () => {
    const { queue, schedule } = fakeScheduler();
    const console_ = await openEpisodeZero(
      [
        () => ({
          status: 409,
          body: { code: "conflict", message: "another submission is in progress" },
        }),
        () => ({
          status: 200,
          body: {
            ...(exchanges[1].response as SessionSnapshot),
            status: "retraining" as const,
          },
        }),
      ],
      schedule,
    );

    await console_.submit();
    expect(console_.state.kind).toBe("retraining");
    expect(queue).toHaveLength(1);
    expect(queue[0].ms).toBe(2000);
  });
});
