/** Wire types mirroring the session service's JSON payloads. */

export type EventType = "turn" | "state" | "summary";

export interface SessionEvent {
  type: EventType;
  seq: number;
  payload: TurnPayload | StatePayload | SummaryPayload;
}

export interface RetrievedRefs {
  api_names: string[];
  api_scores: number[];
  procedure_ids: string[];
  procedure_scores: number[];
}

export interface ParsedAction {
  kind: "action";
  thought: string;
  api_name: string;
  args: Record<string, unknown>;
}

export interface ParsedFinal {
  kind: "final";
  thought: string;
  summary: string;
}

export interface ParsedError {
  kind: "parse_error";
  error_kind: string;
  detail: string;
  raw: string;
}

export type ParsedPayload = ParsedAction | ParsedFinal | ParsedError;

export interface ObservationPayload {
  ok: boolean;
  text: string;
  state_digest: string;
}

export interface TurnPayload {
  index: number;
  instructions: string[];
  retrieved: RetrievedRefs;
  prompt_digest: string;
  parsed: ParsedPayload;
  observation: ObservationPayload | null;
}

export interface ScanningInfo {
  region: string;
  pattern: string;
}

export interface RobotStatePayload {
  probe: string | null;
  gel_applied: string[];
  probe_at: string | null;
  probe_angle_deg: number;
  contact_force_n: number;
  scanning: ScanningInfo | null;
  images: { region: string; angle_deg: number; quality: number }[];
  coverage: Record<string, number>;
  halted: boolean;
}

export interface StatePayload {
  digest: string;
  state: RobotStatePayload;
  session_state: string;
}

export interface SummaryPayload {
  status: string;
  first_step_ok: boolean;
  overall_ok: boolean;
  turn_count: number;
  abort_reason: string | null;
  session_state: string;
}

export const BODY_REGIONS = [
  "neck",
  "neck_carotid",
  "chest_cardiac",
  "abdomen_liver",
  "abdomen_gallbladder",
  "abdomen_kidney",
] as const;

export type BodyRegion = (typeof BODY_REGIONS)[number];

export const SAFE_FORCE_MIN_N = 2;
export const SAFE_FORCE_MAX_N = 15;
export const FORCE_LIMIT_N = 20;
