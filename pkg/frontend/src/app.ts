// Operator console wiring. All rendering goes through the pure modules
// (state.ts, render.ts, tree.ts); this file only owns DOM mounting, the
// form, and the reconnect loop. One stream consumer per open session view.

import { ServiceClient, ServiceError } from "./api.js";
import { applyEvent, initialState, type TimelineState } from "./state.js";
import { renderTimeline } from "./render.js";
import { renderTree } from "./tree.js";
import type { SessionInfo, UiConfig } from "./types.js";

const base = (document.querySelector("meta[name=service-base]") as HTMLMetaElement | null)
  ?.content ?? "http://localhost:8700";
const client = new ServiceClient(base);

const el = (id: string) => document.getElementById(id) as HTMLElement;

let session: SessionInfo | null = null;
let timeline: TimelineState = initialState();
let streaming = false;

function banner(message: string, kind = "error"): void {
  const node = document.createElement("div");
  node.className = `banner ${kind}`;
  node.textContent = message;
  const dismiss = document.createElement("button");
  dismiss.textContent = "×";
  dismiss.onclick = () => node.remove();
  node.appendChild(dismiss);
  el("banners").appendChild(node);
}

function redraw(): void {
  el("timeline").innerHTML = renderTimeline(timeline);
  el("tree").innerHTML = renderTree(timeline.search?.tree ?? null);
}

function showSession(): void {
  const panel = el("session");
  if (!session) {
    panel.innerHTML = `<p class="muted">no session</p>`;
    return;
  }
  const view = session.live_view_url
    ? `<iframe class="live-view" src="${session.live_view_url}"></iframe>`
    : `<p class="muted">no live view exposed; follow the step timeline</p>`;
  panel.innerHTML =
    `<div class="session-id">session ${session.session_id} · ${session.status}</div>` + view;
}

async function followEvents(fromSeq: number): Promise<void> {
  if (!session || streaming) return;
  streaming = true;
  try {
    const last = await client.streamEvents(session.session_id, fromSeq, (event) => {
      timeline = applyEvent(timeline, event);
      redraw();
    });
    timeline = { ...timeline, lastSeq: last };
  } catch (error) {
    // transient drop: resume from the last seq we applied, no duplicates
    if (!(error instanceof ServiceError && error.status === 404)) {
      streaming = false;
      setTimeout(() => void followEvents(timeline.lastSeq), 500);
      return;
    }
    banner("session disappeared while streaming");
  } finally {
    streaming = false;
  }
}

async function createSession(): Promise<void> {
  try {
    session = await client.createSession();
    showSession();
  } catch (error) {
    banner(error instanceof ServiceError ? error.message : String(error));
  }
}

async function teardownSession(): Promise<void> {
  if (!session) return;
  try {
    await client.deleteSession(session.session_id);
  } catch (error) {
    if (error instanceof ServiceError && error.status === 404) {
      banner("session was already gone", "warn");
    } else {
      banner(String(error));
    }
  }
  session = null;
  timeline = initialState();
  showSession();
  redraw();
}

function formValue(id: string): string {
  return (document.getElementById(id) as HTMLInputElement | HTMLSelectElement).value.trim();
}

async function submitGoal(): Promise<void> {
  if (!session) {
    banner("create a session first", "warn");
    return;
  }
  const plan = formValue("plan");
  const mode = formValue("mode") as "episode" | "search";
  try {
    const accepted = await client.submitInstruction(session.session_id, {
      goal: { text: formValue("goal"), starting_url: formValue("url") },
      ...(plan ? { plan } : {}),
      mode,
      agent_kind: formValue("agent-kind"),
      ...(mode === "search" ? { search: { strategy: formValue("strategy") } } : {}),
    });
    timeline = initialState();
    redraw();
    void followEvents(accepted.from_seq);
  } catch (error) {
    if (error instanceof ServiceError && error.status === 409) {
      banner("an instruction is already running in this session", "warn");
    } else {
      banner(error instanceof ServiceError ? error.message : String(error));
    }
  }
}

function fillOptions(select: HTMLSelectElement, values: string[], chosen: string): void {
  select.innerHTML = values
    .map((v) => `<option value="${v}"${v === chosen ? " selected" : ""}>${v}</option>`)
    .join("");
}

async function loadConfig(): Promise<void> {
  try {
    const config: UiConfig = await client.getConfig();
    el("service-name").textContent = `${config.service} ${config.version}`;
    fillOptions(
      el("agent-kind") as HTMLSelectElement,
      config.agent_kinds,
      config.defaults.agent_kind,
    );
    fillOptions(
      el("strategy") as HTMLSelectElement,
      config.search_strategies,
      config.defaults.search.strategy,
    );
  } catch (error) {
    banner(`service unreachable at ${base}: ${String(error)}`);
  }
}

el("create-session").onclick = () => void createSession();
el("delete-session").onclick = () => void teardownSession();
el("submit-goal").onclick = () => void submitGoal();
redraw();
showSession();
void loadConfig();
