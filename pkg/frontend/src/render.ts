// HTML rendering for the step timeline. Pure string output so the view is
// testable without a DOM and trivially diffable: same state, same markup.

import type { StepGroup, TimelineState } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function statusClass(ok: boolean | undefined): string {
  if (ok === undefined) return "pending";
  return ok ? "ok" : "failed";
}

function renderStep(group: StepGroup): string {
  const rows: string[] = [];
  if (group.action !== null) {
    rows.push(`<div class="row generated">${escapeHtml(group.action)}</div>`);
  }
  if (group.grounded !== null) {
    rows.push(
      `<div class="row grounded ${statusClass(group.grounded.ok)}">` +
        `${escapeHtml(group.grounded.detail)}</div>`,
    );
  }
  if (group.executed !== null) {
    rows.push(
      `<div class="row executed ${statusClass(group.executed.ok)}">` +
        `${escapeHtml(group.executed.message)}</div>`,
    );
  }
  const overall = statusClass(group.executed?.ok);
  return (
    `<section class="step-group ${overall}" data-step="${group.step}">` +
    `<header>step ${group.step + 1}</header>${rows.join("")}</section>`
  );
}

function renderPlan(state: TimelineState): string {
  if (!state.plan) return "";
  const parts = [
    `<div class="plan" data-revision="${state.plan.revision}">` +
      `<header>plan (${escapeHtml(state.plan.provenance)})</header>` +
      `<pre>${escapeHtml(state.plan.text)}</pre></div>`,
  ];
  for (const replan of state.replans) {
    parts.push(
      `<div class="plan replanned" data-revision="${replan.revision}">` +
        `<header>plan revision ${replan.revision}</header>` +
        `<pre>${escapeHtml(replan.text)}</pre></div>`,
    );
  }
  return parts.join("");
}

function renderOutcome(state: TimelineState): string {
  if (state.error !== null) {
    return `<div class="badge error">error: ${escapeHtml(state.error)}</div>`;
  }
  if (state.done !== null) {
    const d = state.done;
    return (
      `<div class="badge done">done · ${escapeHtml(d.reason)} · ` +
      `${d.successCount}/${d.steps} steps ok</div>`
    );
  }
  return `<div class="badge running">running…</div>`;
}

export function renderTimeline(state: TimelineState): string {
  return (
    `<div class="timeline" data-last-seq="${state.lastSeq}">` +
    renderPlan(state) +
    state.steps.map(renderStep).join("") +
    renderOutcome(state) +
    `</div>`
  );
}
