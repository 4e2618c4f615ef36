/**
 * Pure view model: the rendered view is a function of the events received so
 * far plus the input state. Replaying a recorded event log reproduces the
 * identical model, and events arriving twice (stream reconnect backfill) are
 * dropped by sequence number, so timeline order always matches event order.
 */

import type {
  ObservationPayload,
  ParsedPayload,
  RobotStatePayload,
  SessionEvent,
  StatePayload,
  SummaryPayload,
  TurnPayload,
} from "./types.js";

export interface TimelineEntry {
  seq: number;
  index: number;
  kind: "action" | "final" | "parse_error";
  thought: string;
  actionName: string | null;
  actionArgs: Record<string, unknown> | null;
  finalSummary: string | null;
  parseDetail: string | null;
  observation: ObservationPayload | null;
  promptDigest: string;
  instructions: string[];
}

export interface ViewModel {
  timeline: TimelineEntry[];
  robot: RobotStatePayload | null;
  robotDigest: string | null;
  summary: SummaryPayload | null;
  sessionState: string;
  lastSeq: number;
}

export function initialViewModel(): ViewModel {
  return {
    timeline: [],
    robot: null,
    robotDigest: null,
    summary: null,
    sessionState: "idle",
    lastSeq: -1,
  };
}

function timelineEntry(seq: number, payload: TurnPayload): TimelineEntry {
  const parsed: ParsedPayload = payload.parsed;
  return {
    seq,
    index: payload.index,
    kind: parsed.kind,
    thought: parsed.kind === "parse_error" ? "" : parsed.thought,
    actionName: parsed.kind === "action" ? parsed.api_name : null,
    actionArgs: parsed.kind === "action" ? parsed.args : null,
    finalSummary: parsed.kind === "final" ? parsed.summary : null,
    parseDetail: parsed.kind === "parse_error" ? parsed.detail : null,
    observation: payload.observation,
    promptDigest: payload.prompt_digest,
    instructions: payload.instructions,
  };
}

/** Fold one event into the model. Pure: returns a new model, never mutates. */
export function reduceEvent(model: ViewModel, event: SessionEvent): ViewModel {
  if (event.seq <= model.lastSeq) {
    return model; // duplicate from a reconnect backfill
  }
  const next: ViewModel = { ...model, lastSeq: event.seq };
  switch (event.type) {
    case "turn": {
      const entry = timelineEntry(event.seq, event.payload as TurnPayload);
      next.timeline = [...model.timeline, entry];
      break;
    }
    case "state": {
      const payload = event.payload as StatePayload;
      next.robot = payload.state; // the panel reflects the latest state only
      next.robotDigest = payload.digest;
      next.sessionState = payload.session_state;
      break;
    }
    case "summary": {
      const payload = event.payload as SummaryPayload;
      next.summary = payload;
      next.sessionState = payload.session_state;
      break;
    }
  }
  return next;
}

export function reduceEvents(model: ViewModel, events: SessionEvent[]): ViewModel {
  return events.reduce(reduceEvent, model);
}
