// HTML renderers for turn view models. Pure string builders so the display
// logic is testable without a browser; main.ts mounts the output.

import type { LabelScore, SpecialistResponse, SpecialtyLabel } from "./types.js";
import type { TurnViewModel } from "./viewmodel.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderConfidenceBars(scores: LabelScore[], selectedIds: string[]): string {
  const selected = new Set(selectedIds);
  const rows = scores
    .map((ls) => {
      const pct = Math.round(ls.score * 1000) / 10;
      const cls = selected.has(ls.label.id) ? "bar-row selected" : "bar-row";
      return (
        `<div class="${cls}" data-label="${escapeHtml(ls.label.id)}">` +
        `<span class="bar-name">${escapeHtml(ls.label.display_name)}</span>` +
        `<span class="bar-track"><span class="bar-fill" style="width:${pct}%"></span></span>` +
        `<span class="bar-value">${ls.score.toFixed(3)}</span>` +
        `</div>`
      );
    })
    .join("");
  return `<div class="confidence-bars">${rows}</div>`;
}

const STATUS_LABELS: Record<string, string> = {
  ok: "ok",
  timeout: "timed out",
  backend_error: "backend error",
};

export function renderSpecialistCard(response: SpecialistResponse): string {
  const status = STATUS_LABELS[response.status] ?? response.status;
  const body =
    response.status === "ok"
      ? `<p class="card-text">${escapeHtml(response.text)}</p>`
      : `<p class="card-text card-failure">No answer (${escapeHtml(status)}).</p>`;
  return (
    `<div class="specialist-card status-${response.status}" data-specialty="${escapeHtml(response.specialty.id)}">` +
    `<header><span class="card-title">${escapeHtml(response.specialty.display_name)}</span>` +
    `<span class="status-badge">${escapeHtml(status)}</span>` +
    `<span class="card-latency">${response.latency_ms} ms</span></header>` +
    body +
    `</div>`
  );
}

export function renderTimings(timings: Record<string, number>): string {
  const cells = Object.entries(timings)
    .map(([stage, ms]) => `<span class="timing" data-stage="${escapeHtml(stage)}">${escapeHtml(stage)}: ${ms} ms</span>`)
    .join(" ");
  return `<div class="timings">${cells}</div>`;
}

export function renderTurn(turn: TurnViewModel): string {
  const parts: string[] = [];
  const badges: string[] = [];
  if (turn.forced) badges.push(`<span class="badge badge-forced">direct to specialist</span>`);
  if (turn.fallbackUsed) badges.push(`<span class="badge badge-fallback">fallback routing</span>`);
  if (turn.degraded) badges.push(`<span class="badge badge-degraded">degraded</span>`);

  parts.push(
    `<div class="user-message">${escapeHtml(turn.userMessage)}${badges.join("")}</div>`,
  );
  if (turn.reformulatedQuestion !== null && turn.reformulatedQuestion !== turn.userMessage) {
    parts.push(
      `<details class="reformulated"><summary>reformulated question</summary>` +
        `<p>${escapeHtml(turn.reformulatedQuestion)}</p></details>`,
    );
  }
  if (turn.scores.length > 0) {
    parts.push(renderConfidenceBars(turn.scores, turn.selectedIds));
  }
  if (turn.cards.length > 0) {
    parts.push(`<div class="cards">${turn.cards.map(renderSpecialistCard).join("")}</div>`);
  }
  if (turn.error !== null) {
    parts.push(`<div class="error-banner">${escapeHtml(turn.error)}</div>`);
  }
  if (turn.finalText !== null) {
    parts.push(`<div class="final-answer">${escapeHtml(turn.finalText)}</div>`);
  } else if (!turn.done) {
    parts.push(`<div class="pending">waiting for specialists…</div>`);
  }
  if (turn.timings) {
    parts.push(renderTimings(turn.timings));
  }
  return `<article class="turn">${parts.join("")}</article>`;
}

export interface PickerOption {
  value: string;
  label: string;
}

/** Dropdown options: "Auto (router)" plus the ten display names; null registry
 * (failed fetch) leaves auto-only. */
export function buildPickerOptions(registry: SpecialtyLabel[] | null): PickerOption[] {
  const options: PickerOption[] = [{ value: "", label: "Auto (router)" }];
  if (registry) {
    for (const label of registry) {
      options.push({ value: label.id, label: label.display_name });
    }
  }
  return options;
}
