/**
 * Session-service client: REST calls plus an auto-reconnecting event stream.
 *
 * The server closes the stream after each episode's summary event. The
 * subscription reconnects on unexpected drops (with a visible state change so
 * the UI can show a banner) and deduplicates the backfill by sequence number;
 * once a summary for a finished or awaiting session has arrived it stops.
 */

import type { SessionEvent, SummaryPayload } from "./types.js";

export interface CreateSessionOptions {
  backend: string;
  region?: string;
  max_iters?: number;
}

export interface SubscriptionHandlers {
  onEvent: (event: SessionEvent) => void;
  onConnectionChange: (state: "connecting" | "live" | "closed" | "reconnecting" | "error", detail?: string) => void;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // keep the status text
  }
  return new ApiError(response.status, detail);
}

export async function createSession(base: string, options: CreateSessionOptions): Promise<string> {
  const response = await fetch(`${base}/sessions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(options),
  });
  if (!response.ok) throw await parseError(response);
  const body = (await response.json()) as { id: string };
  return body.id;
}

export async function sendInstruction(base: string, sessionId: string, text: string): Promise<void> {
  const response = await fetch(`${base}/sessions/${sessionId}/instructions`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ text }),
  });
  if (!response.ok) throw await parseError(response);
}

export interface Subscription {
  close(): void;
}

export function subscribe(base: string, sessionId: string, handlers: SubscriptionHandlers): Subscription {
  let source: EventSource | null = null;
  let closed = false;
  let lastSeq = -1;
  let retryDelay = 500;

  const open = () => {
    if (closed) return;
    handlers.onConnectionChange(lastSeq < 0 ? "connecting" : "reconnecting");
    source = new EventSource(`${base}/sessions/${sessionId}/events`);
    source.onopen = () => {
      retryDelay = 500;
      handlers.onConnectionChange("live");
    };
    source.onmessage = (message) => {
      const event = JSON.parse(message.data) as SessionEvent;
      if (event.seq <= lastSeq) return;
      lastSeq = event.seq;
      handlers.onEvent(event);
      if (event.type === "summary") {
        const payload = event.payload as SummaryPayload;
        if (payload.session_state === "finished" || payload.session_state === "awaiting_instruction") {
          closed = true;
          source?.close();
          handlers.onConnectionChange("closed");
        }
      }
    };
    source.onerror = () => {
      source?.close();
      if (closed) return;
      handlers.onConnectionChange("reconnecting", `retrying in ${retryDelay} ms`);
      setTimeout(open, retryDelay);
      retryDelay = Math.min(retryDelay * 2, 5000);
    };
  };

  open();
  return {
    close() {
      closed = true;
      source?.close();
      handlers.onConnectionChange("closed");
    },
  };
}
