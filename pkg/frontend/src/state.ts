/** Pure view-state helpers.
 *
 * The console never computes label-side numbers itself: progress counts,
 * curve points and episode indices are copied from the latest server
 * snapshot. The only state owned here is which level the user picked on
 * each card, and even that is kept immutably so renders stay cheap to
 * reason about.
 */

import type {
  BatchPayload,
  Level,
  SampleCard,
  SessionSnapshot,
  SessionView,
} from "./types";
import type { LabelEntry } from "./api";

/** Build a view from a server snapshot plus (optionally) a pending batch. */
export function makeView(snapshot: SessionSnapshot, batch?: BatchPayload): SessionView {
  const cards: SampleCard[] = (batch?.batch ?? []).map((item) => ({
    poolId: item.pool_id,
    clipRef: item.clip_ref,
    second: item.second,
    level: null,
  }));
  return {
    token: snapshot.token,
    status: snapshot.status,
    studentId: snapshot.student_id,
    episode: snapshot.episode,
    episodesTotal: snapshot.episodes_total,
    batchSize: snapshot.batch_size,
    labelsCollected: snapshot.labels_collected,
    labelsTarget: snapshot.labels_target,
    curve: snapshot.auroc_curve.map((p) => ({ ...p })),
    cards,
  };
}

/** Return a copy of the view with one card's level changed. */
export function setCardLevel(view: SessionView, poolId: number, level: Level): SessionView {
  if (!view.cards.some((c) => c.poolId === poolId)) {
    throw new Error(`no card with pool_id ${poolId}`);
  }
  return {
    ...view,
    cards: view.cards.map((c) => (c.poolId === poolId ? { ...c, level } : c)),
  };
}

export function allLabeled(cards: readonly SampleCard[]): boolean {
  return cards.every((c) => c.level !== null);
}

/** Submission is possible only when every displayed card carries a level. */
export function submitEnabled(view: SessionView): boolean {
  return (
    view.status === "awaiting_labels" &&
    view.cards.length > 0 &&
    allLabeled(view.cards)
  );
}

/** Labels in batch order, ready for POST .../labels. */
export function labelPayload(view: SessionView): LabelEntry[] {
  return view.cards.map((c) => {
    if (c.level === null) {
      throw new Error(`card ${c.poolId} has no level`);
    }
    return { pool_id: c.poolId, level: c.level };
  });
}

/** Progress fraction straight from the server's counters. */
export function progress(view: SessionView): number {
  if (view.labelsTarget <= 0) {
    return 0;
  }
  return view.labelsCollected / view.labelsTarget;
}

/**
 * Pick which displayed cards a validation message is complaining about.
 *
 * The service reports id mismatches as two bracketed lists, e.g.
 * "labels must cover exactly the pending batch [3, 7], got [3, 9]".
 * The last list is what the server actually received, so any displayed
 * card missing from it is part of the mismatch. Messages without a
 * bracketed list (bad level values, duplicates) give no per-card signal,
 * so nothing is highlighted.
 */
export function offendingCardIds(message: string, cards: readonly SampleCard[]): number[] {
  const lists = [...message.matchAll(/\[([^\]]*)\]/g)];
  if (lists.length === 0) {
    return [];
  }
  const last = lists[lists.length - 1][1];
  const got = new Set<number>();
  for (const piece of last.split(",")) {
    const text = piece.trim();
    if (text === "") {
      continue;
    }
    const value = Number(text);
    if (!Number.isInteger(value)) {
      return [];
    }
    got.add(value);
  }
  return cards.filter((c) => !got.has(c.poolId)).map((c) => c.poolId);
}
