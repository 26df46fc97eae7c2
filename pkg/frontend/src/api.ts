// Thin client for the websteer service. Nothing here is clever: every call
// maps to one route, and streaming hands parsed events to a callback so the
// caller owns reconnect policy (pass the last seq it saw as fromSeq).

import { SseParser } from "./sse.js";
import type {
  InstructionAccepted,
  InstructionBody,
  ServiceEvent,
  SessionInfo,
  UiConfig,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const response = await fetch(base + path, init);
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ServiceError(response.status, detail);
  }
  if (response.status === 204) {
    return undefined as T;
  }
  return (await response.json()) as T;
}

export class ServiceClient {
  constructor(private base: string) {}

  getConfig(): Promise<UiConfig> {
    return request(this.base, "/config");
  }

  createSession(): Promise<SessionInfo> {
    return request(this.base, "/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: "{}",
    });
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return request(this.base, `/sessions/${sessionId}`);
  }

  deleteSession(sessionId: string): Promise<void> {
    return request(this.base, `/sessions/${sessionId}`, { method: "DELETE" });
  }

  submitInstruction(sessionId: string, body: InstructionBody): Promise<InstructionAccepted> {
    return request(this.base, `/sessions/${sessionId}/instructions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  // Read one event stream to its end (terminal event or server close),
  // invoking onEvent per parsed event. Returns the last seq seen.
  async streamEvents(
    sessionId: string,
    fromSeq: number,
    onEvent: (event: ServiceEvent) => void,
    signal?: AbortSignal,
  ): Promise<number> {
    const response = await fetch(
      `${this.base}/sessions/${sessionId}/events?from_seq=${fromSeq}`,
      { signal },
    );
    if (!response.ok || !response.body) {
      throw new ServiceError(response.status, "event stream failed to open");
    }
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    const parser = new SseParser();
    let lastSeq = fromSeq;
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      for (const event of parser.push(decoder.decode(value, { stream: true }))) {
        lastSeq = event.seq;
        onEvent(event);
      }
    }
    return lastSeq;
  }
}
