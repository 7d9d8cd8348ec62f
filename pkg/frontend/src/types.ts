// Shapes of what the backend serves; see docs/protocol.md in the repo root.

export interface FieldValue {
  value: number | number[];
  unit: string;
}

export interface IngestRecord {
  sequence: number;
  receive_time: string;
  channel: string; // rxsm | iridium | lora-test
  origin: number | null;
  message: string | null;
  fields: Record<string, FieldValue>;
  raw: string;
  error?: string;
}

export interface Prediction {
  predicted_lat: number;
  predicted_lon: number;
  time_to_land_s: number;
  uncertainty_radius_m: number;
  based_on: number;
}

export type AckState = "pending" | "acked" | "timed-out";

export interface CommandInfo {
  command_id: number;
  command: string;
  target: string;
  issued_by: string;
  ack_state: AckState;
}

export const PHASES = [
  "PreLaunch", "RadioSilence", "Ascent", "Ejection", "Descent", "Landed",
] as const;

export function phaseName(phase: number | undefined): string {
  if (phase === undefined || phase < 0 || phase >= PHASES.length) return "?";
  return PHASES[phase];
}

export const PRE_EJECTION_PHASES = new Set([0, 1, 2]);
