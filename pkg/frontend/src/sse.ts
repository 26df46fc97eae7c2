// Incremental parser for the service's SSE framing:
//
//   id: 7
//   event: action_executed
//   data: {"step": 1, ...}
//   <blank line>
//
// Chunks from the network can split anywhere, including inside a line, so
// the parser buffers until a blank line completes a frame.

import type { EventKind, ServiceEvent } from "./types.js";

export class SseParser {
  private buffer = "";
  private fields: Record<string, string> = {};

  // Feed one chunk; returns the events completed by it.
  push(chunk: string): ServiceEvent[] {
    this.buffer += chunk;
    const events: ServiceEvent[] = [];
    let newline = this.buffer.indexOf("\n");
    while (newline !== -1) {
      const line = this.buffer.slice(0, newline).replace(/\r$/, "");
      this.buffer = this.buffer.slice(newline + 1);
      if (line === "") {
        const event = this.finishFrame();
        if (event) events.push(event);
      } else if (!line.startsWith(":")) {
        const sep = line.indexOf(": ");
        if (sep !== -1) {
          this.fields[line.slice(0, sep)] = line.slice(sep + 2);
        }
      }
      newline = this.buffer.indexOf("\n");
    }
    return events;
  }

  private finishFrame(): ServiceEvent | null {
    const { id, event, data } = this.fields;
    this.fields = {};
    if (id === undefined || event === undefined || data === undefined) {
      return null;
    }
    return {
      seq: Number(id),
      kind: event as EventKind,
      data: JSON.parse(data) as Record<string, unknown>,
    };
  }
}
