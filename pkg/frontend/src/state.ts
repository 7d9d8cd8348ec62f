// Dashboard state is a pure fold over the backend's record stream: replaying
// the same records yields the same view, so a reload that re-fetches
// /records reconstructs exactly what was on screen. Nothing here is
// authoritative; the backend store is.
import { CommandInfo, IngestRecord, Prediction } from "./types.js";

export interface SeedTelemetry {
  seedId: number;
  counter?: number;
  lat?: number;
  lon?: number;
  alt?: number;
  vz?: number;
  phase?: number;
  vBat1?: number;
  vBat2?: number;
  gpsValid?: boolean;
  lastSequence: number;
}

export interface PowerSample {
  sequence: number;
  counter: number;
  vBus: number;
  iBat1: number;
  iBat2: number;
  iRxsm: number;
  conducting: number;
  latches: number;
}

export interface ChannelStatus {
  count: number;
  lastSequence: number;
  lastReceiveTime: string;
}

export type Connection = "connecting" | "live" | "lost";

export interface DashboardState {
  lastSequence: number;
  seeds: Map<number, SeedTelemetry>;
  power: Map<number, PowerSample[]>;
  channels: Map<string, ChannelStatus>;
  commands: CommandInfo[];
  predictions: Map<number, Prediction>;
  quarantineCount: number;
  recordCount: number;
  connection: Connection;
  commandError: string | null;
}

export const POWER_HISTORY = 300;

export function initialState(): DashboardState {
  return {
    lastSequence: -1,
    seeds: new Map(),
    power: new Map(),
    channels: new Map(),
    commands: [],
    predictions: new Map(),
    quarantineCount: 0,
    recordCount: 0,
    connection: "connecting",
    commandError: null,
  };
}

function num(record: IngestRecord, field: string): number | undefined {
  const entry = record.fields[field];
  return entry && typeof entry.value === "number" ? entry.value : undefined;
}

export function applyRecord(state: DashboardState, record: IngestRecord): DashboardState {
  state.recordCount += 1;
  state.lastSequence = Math.max(state.lastSequence, record.sequence);
  const channel = state.channels.get(record.channel) ?? {
    count: 0, lastSequence: -1, lastReceiveTime: "",
  };
  channel.count += 1;
  channel.lastSequence = record.sequence;
  channel.lastReceiveTime = record.receive_time;
  state.channels.set(record.channel, channel);

  if (record.error) {
    state.quarantineCount += 1;
    return state;
  }
  if (record.message === "seed_status") {
    const seedId = num(record, "seed_id") ?? record.origin ?? 0;
    const flags = num(record, "flags") ?? 0;
    const telemetry: SeedTelemetry = {
      ...(state.seeds.get(seedId) ?? { seedId, lastSequence: -1 }),
      seedId,
      counter: num(record, "counter"),
      vz: num(record, "vz"),
      phase: num(record, "phase"),
      vBat1: num(record, "v_bat1"),
      vBat2: num(record, "v_bat2"),
      gpsValid: (flags & 1) === 1,
      lastSequence: record.sequence,
    };
    if ((flags & 1) === 1) {
      telemetry.lat = num(record, "lat");
      telemetry.lon = num(record, "lon");
      telemetry.alt = num(record, "alt");
    }
    state.seeds.set(seedId, telemetry);
  } else if (record.message === "power_status") {
    const seedId = num(record, "seed_id") ?? record.origin ?? 0;
    const series = state.power.get(seedId) ?? [];
    series.push({
      sequence: record.sequence,
      counter: num(record, "counter") ?? 0,
      vBus: num(record, "v_bus") ?? 0,
      iBat1: num(record, "i_bat1") ?? 0,
      iBat2: num(record, "i_bat2") ?? 0,
      iRxsm: num(record, "i_rxsm") ?? 0,
      conducting: num(record, "conducting") ?? 0,
      latches: num(record, "latches") ?? 0,
    });
    if (series.length > POWER_HISTORY) series.splice(0, series.length - POWER_HISTORY);
    state.power.set(seedId, series);
  } else if (record.message === "command_ack") {
    const commandId = num(record, "command_id");
    for (const cmd of state.commands) {
      if (cmd.command_id === commandId && cmd.ack_state === "pending") {
        cmd.ack_state = "acked";
      }
    }
  }
  return state;
}

export function applyRecords(state: DashboardState, records: IngestRecord[]): DashboardState {
  for (const record of records) applyRecord(state, record);
  return state;
}

export function setCommands(state: DashboardState, commands: CommandInfo[]): void {
  // server-reported ack states win over the optimistic local ones
  state.commands = commands;
}

export function trackCommand(state: DashboardState, command: CommandInfo): void {
  state.commands.push(command);
  state.commandError = null;
}

export function latestPower(state: DashboardState, seedId: number): PowerSample | undefined {
  const series = state.power.get(seedId);
  return series?.[series.length - 1];
}
