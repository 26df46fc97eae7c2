// Timeline state is a pure function of the event log: feeding the same
// events in seq order always produces the same state, and an event whose
// seq was already applied is a no-op. That makes reconnects idempotent (a
// resumed stream may overlap the rows already rendered) and lets a recorded
// log replay into exactly the view the live run produced.

import type { ServiceEvent, TreeExport } from "./types.js";

export interface StepGroup {
  step: number;
  action: string | null;
  grounded: { ok: boolean; detail: string } | null;
  executed: { ok: boolean; message: string; url: string } | null;
}

export interface PlanRow {
  text: string;
  revision: number;
  provenance: string;
}

export interface TimelineState {
  lastSeq: number;
  plan: PlanRow | null;
  replans: PlanRow[];
  steps: StepGroup[];
  search: { strategy: string; iteration: number; tree: TreeExport } | null;
  done: { reason: string; steps: number; successCount: number; finalUrl: string } | null;
  error: string | null;
}

export function initialState(): TimelineState {
  return {
    lastSeq: 0,
    plan: null,
    replans: [],
    steps: [],
    search: null,
    done: null,
    error: null,
  };
}

function groupFor(state: TimelineState, step: number): StepGroup {
  let group = state.steps.find((g) => g.step === step);
  if (!group) {
    group = { step, action: null, grounded: null, executed: null };
    state.steps.push(group);
  }
  return group;
}

function groundedDetail(data: Record<string, unknown>): string {
  if (data.ok === false) {
    return String(data.error ?? "grounding failed");
  }
  const kind = String(data.kind ?? "");
  const selector = data.selector == null ? "" : ` ${String(data.selector)}`;
  return `${kind}${selector}`.trim();
}

export function applyEvent(state: TimelineState, event: ServiceEvent): TimelineState {
  if (event.seq <= state.lastSeq) {
    return state; // already applied; resumed streams may overlap
  }
  const next: TimelineState = {
    ...state,
    replans: [...state.replans],
    steps: state.steps.map((g) => ({ ...g })),
    lastSeq: event.seq,
  };
  const data = event.data;
  switch (event.kind) {
    case "plan_generated":
      next.plan = {
        text: String(data.plan ?? ""),
        revision: Number(data.revision ?? 0),
        provenance: String(data.provenance ?? ""),
      };
      break;
    case "replanned":
      next.replans.push({
        text: String(data.plan ?? ""),
        revision: Number(data.revision ?? 0),
        provenance: "replanned",
      });
      break;
    case "action_generated":
      groupFor(next, Number(data.step)).action = String(data.action ?? "");
      break;
    case "action_grounded":
      groupFor(next, Number(data.step)).grounded = {
        ok: data.ok !== false,
        detail: groundedDetail(data),
      };
      break;
    case "action_executed":
      groupFor(next, Number(data.step)).executed = {
        ok: data.ok !== false,
        message: String(data.message ?? ""),
        url: String(data.url ?? ""),
      };
      break;
    case "search_progress":
      next.search = {
        strategy: String(data.strategy ?? ""),
        iteration: Number(data.iteration ?? 0),
        tree: data.tree as TreeExport,
      };
      break;
    case "done":
      next.done = {
        reason: String(data.reason ?? ""),
        steps: Number(data.steps ?? 0),
        successCount: Number(data.success_count ?? 0),
        finalUrl: String(data.final_url ?? ""),
      };
      break;
    case "error":
      next.error = String(data.error ?? "unknown error");
      break;
  }
  return next;
}

export function reduceLog(events: ServiceEvent[]): TimelineState {
  return events.reduce(applyEvent, initialState());
}
