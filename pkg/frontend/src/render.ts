/** HTML renderers.
 *
 * Pure string producers so they can be unit tested without a browser.
 * Every number on screen is read from the view, which in turn mirrors the
 * last server snapshot; nothing is recomputed here.
 */

import type { ConsoleState } from "./controller";
import { LEVELS, type CurvePoint, type SampleCard, type SessionView } from "./types";
import { makeView, progress, submitEnabled } from "./state";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

/**
 * Decide whether a clip reference can be shown inline. Only refs that look
 * like fetchable URLs with a known media extension qualify; everything else
 * (opaque ids like "synthetic:s01:17") is rendered as text metadata.
 */
export function isMediaRef(ref: string): boolean {
  if (!/^(https?:\/\/|\/)/.test(ref)) {
    return false;
  }
  return /\.(png|jpe?g|gif|webp|bmp|mp4|webm|ogg)(\?|#|$)/i.test(ref);
}

/** Progress counter and bar, fed by the server's own counters. */
export function renderProgress(view: SessionView): string {
  const fraction = progress(view);
  const percent = Math.round(fraction * 100);
  return (
    `<div class="progress">` +
    `<span class="progress-label">${view.labelsCollected}/${view.labelsTarget} labels</span>` +
    `<span class="progress-bar"><span class="progress-fill" style="width:${percent}%"></span></span>` +
    `</div>`
  );
}

/** Inline SVG of the auroc-versus-labels curve, one circle per episode. */
export function renderCurve(curve: readonly CurvePoint[]): string {
  const width = 320;
  const height = 140;
  const pad = 24;
  if (curve.length === 0) {
    return `<svg class="curve" viewBox="0 0 ${width} ${height}"></svg>`;
  }
  const maxLabels = Math.max(...curve.map((p) => p.labels_used), 1);
  const x = (p: CurvePoint) => pad + (p.labels_used / maxLabels) * (width - 2 * pad);
  const y = (p: CurvePoint) => height - pad - p.auroc * (height - 2 * pad);
  const points = curve.map((p) => `${x(p).toFixed(1)},${y(p).toFixed(1)}`).join(" ");
  const circles = curve
    .map(
      (p) =>
        `<circle cx="${x(p).toFixed(1)}" cy="${y(p).toFixed(1)}" r="3">` +
        `<title>episode ${p.episode}: ${p.auroc.toFixed(4)} after ${p.labels_used} labels</title>` +
        `</circle>`,
    )
    .join("");
  return (
    `<svg class="curve" viewBox="0 0 ${width} ${height}">` +
    `<polyline fill="none" points="${points}"></polyline>` +
    circles +
    `</svg>`
  );
}

function renderClip(card: SampleCard): string {
  if (isMediaRef(card.clipRef)) {
    return `<img class="clip" src="${escapeHtml(card.clipRef)}" alt="sample clip">`;
  }
  return `<code class="clip-ref">${escapeHtml(card.clipRef)}</code>`;
}

/** The batch as labelable cards with one button per level. */
export function renderCards(
  cards: readonly SampleCard[],
  offending: readonly number[] = [],
): string {
  const flagged = new Set(offending);
  const items = cards.map((card) => {
    const classes = flagged.has(card.poolId) ? "card offending" : "card";
    const buttons = LEVELS.map((level) => {
      const selected = card.level === level ? " selected" : "";
      return (
        `<button class="level${selected}" data-pool="${card.poolId}" ` +
        `data-level="${level}">${level}</button>`
      );
    }).join("");
    return (
      `<article class="${classes}" data-card="${card.poolId}">` +
      renderClip(card) +
      `<span class="second">second ${card.second}</span>` +
      `<span class="levels">${buttons}</span>` +
      `</article>`
    );
  });
  return `<section class="cards">${items.join("")}</section>`;
}

export function renderSubmit(view: SessionView): string {
  const disabled = submitEnabled(view) ? "" : " disabled";
  return `<button class="submit" data-action="submit"${disabled}>Submit labels</button>`;
}

export function renderBanner(message: string, tone: "error" | "info" = "error"): string {
  return `<div class="banner ${tone}">${escapeHtml(message)}</div>`;
}

export function renderSpinner(): string {
  return (
    `<div class="spinner" role="status">` +
    `Retraining. Checking again every 2 seconds.` +
    `</div>`
  );
}

/** Final screen: full progress count and the whole curve, no cards left. */
export function renderCompletion(view: SessionView): string {
  return (
    `<section class="completion">` +
    `<h2>Session complete</h2>` +
    renderProgress(view) +
    renderCurve(view.curve) +
    `</section>`
  );
}

function renderTokenEntry(error: string | null): string {
  const banner = error === null ? "" : renderBanner(error);
  return (
    `<section class="token-entry">` +
    banner +
    `<form data-action="open">` +
    `<label>Session token <input name="token" autocomplete="off"></label>` +
    `<button type="submit">Open</button>` +
    `</form>` +
    `</section>`
  );
}

export function renderConsole(state: ConsoleState): string {
  switch (state.kind) {
    case "token_entry":
      return renderTokenEntry(state.error);
    case "loading":
      return `<div class="loading">Loading session</div>`;
    case "labeling": {
      const banner = state.banner === null ? "" : renderBanner(state.banner);
      return (
        banner +
        renderProgress(state.view) +
        renderCurve(state.view.curve) +
        renderCards(state.view.cards, state.offending) +
        renderSubmit(state.view)
      );
    }
    case "retraining":
      return renderProgress(makeView(state.snapshot)) + renderSpinner();
    case "complete":
      return renderCompletion(state.view);
    case "failed_submit":
      return (
        renderBanner(state.message) +
        `<button class="retry" data-action="retry">Retry submission</button>` +
        renderProgress(state.view) +
        renderCards(state.view.cards)
      );
  }
}
