// Timeline rendering against a real recorded event log (produced by the
// service's episode loop on the fixture site, seqs 1..8).

import { describe, expect, it } from "vitest";

import episodeLog from "./fixtures/episode_events.json";
import { renderTimeline } from "../src/render.js";
import { applyEvent, initialState, reduceLog } from "../src/state.js";
import type { ServiceEvent } from "../src/types.js";

const log = episodeLog as unknown as ServiceEvent[];

function count(haystack: string, needle: string): number {
  return haystack.split(needle).length - 1;
}

describe("recorded two-step episode", () => {
  it("renders exactly two step groups and a done badge", () => {
    const html = renderTimeline(reduceLog(log));
    expect(count(html, 'class="step-group')).toBe(2);
    expect(html).toContain('class="badge done"');
    expect(html).not.toContain('class="badge running"');
  });

  it("keeps per-step rows in generated, grounded, executed order", () => {
    const html = renderTimeline(reduceLog(log));
    const first = html.indexOf('data-step="0"');
    const second = html.indexOf('data-step="1"');
    expect(first).toBeGreaterThan(-1);
    expect(second).toBeGreaterThan(first);
    const step = html.slice(first, second);
    const generated = step.indexOf('class="row generated"');
    const grounded = step.indexOf('class="row grounded');
    const executed = step.indexOf('class="row executed');
    expect(generated).toBeGreaterThan(-1);
    expect(grounded).toBeGreaterThan(generated);
    expect(executed).toBeGreaterThan(grounded);
  });

  it("is a pure function of the log: same events, same markup", () => {
    const once = renderTimeline(reduceLog(log));
    const twice = renderTimeline(reduceLog(log.map((e) => ({ ...e }))));
    expect(twice).toBe(once);
  });
});

describe("reconnect mid-log", () => {
  it("re-delivered events change nothing, so no duplicate rows", () => {
    // drop after seq 4, then resume with a stream that overlaps (3..8)
    let state = initialState();
    for (const event of log.slice(0, 4)) state = applyEvent(state, event);
    const atDrop = renderTimeline(state);
    for (const event of log.slice(2)) state = applyEvent(state, event);

    const resumed = renderTimeline(state);
    const straight = renderTimeline(reduceLog(log));
    expect(resumed).toBe(straight);
    expect(count(resumed, 'class="row generated"')).toBe(2);
    expect(resumed).not.toBe(atDrop);
  });

  it("an exact-suffix resume lands on the same state too", () => {
    let state = initialState();
    for (const event of log.slice(0, 4)) state = applyEvent(state, event);
    for (const event of log.slice(4)) state = applyEvent(state, event);
    expect(state).toEqual(reduceLog(log));
  });
});

describe("terminal states", () => {
  it("an error event renders an error badge instead of done", () => {
    const state = reduceLog([
      { seq: 1, kind: "error", data: { error: "initial navigation failed", steps: 0 } },
    ]);
    const html = renderTimeline(state);
    expect(html).toContain('class="badge error"');
    expect(html).toContain("initial navigation failed");
  });

  it("an unfinished log still shows the running badge", () => {
    const html = renderTimeline(reduceLog(log.slice(0, 4)));
    expect(html).toContain('class="badge running"');
  });

  it("grounding failures color the step as failed", () => {
    const state = reduceLog([
      { seq: 1, kind: "action_generated", data: { step: 0, action: "click element [9]" } },
      { seq: 2, kind: "action_grounded", data: { step: 0, ok: false, error: "no mark 9" } },
      {
        seq: 3,
        kind: "action_executed",
        data: { step: 0, ok: false, message: "grounding failed: no mark 9", url: "" },
      },
    ]);
    const html = renderTimeline(state);
    expect(html).toContain('class="step-group failed"');
    expect(html).toContain("no mark 9");
  });
});
