import { describe, expect, it } from "vitest";

import { buildMapView } from "./map.js";
import { SseParser } from "./sse.js";
import {
  applyRecord, applyRecords, initialState, latestPower, trackCommand,
} from "./state.js";
import { IngestRecord } from "./types.js";

let seq = 0;

function record(message: string, fields: Record<string, [number, string]>,
                channel = "rxsm", error?: string): IngestRecord {
  const rec: IngestRecord = {
    sequence: seq++,
    receive_time: new Date().toISOString(),
    channel,
    origin: 1,
    message: error ? null : message,
    fields: Object.fromEntries(
      Object.entries(fields).map(([k, [value, unit]]) => [k, { value, unit }])),
    raw: "00",
  };
  if (error) rec.error = error;
  return rec;
}

function gpsStatus(lat: number, lon: number, alt: number, phase = 4,
                   seedId = 1, counter = 1): IngestRecord {
  return record("seed_status", {
    version: [1, "raw"], seed_id: [seedId, "raw"], counter: [counter, "raw"],
    lat: [lat, "deg"], lon: [lon, "deg"], alt: [alt, "m"], vz: [-25.0, "m/s"],
    phase: [phase, "raw"], v_bat1: [8.4, "V"], v_bat2: [8.39, "V"],
    flags: [1, "raw"],
  });
}

function powerStatus(iBat1: number, iBat2: number, latches = 0,
                     seedId = 1): IngestRecord {
  return record("power_status", {
    seed_id: [seedId, "raw"], counter: [1, "raw"], v_bus: [8.3, "V"],
    i_bat1: [iBat1, "A"], i_bat2: [iBat2, "A"], i_rxsm: [0, "A"],
    conducting: [3, "raw"], latches: [latches, "raw"],
  });
}

describe("dashboard state reducer", () => {
  it("tracks seed telemetry from a gps-bearing status", () => {
    const state = initialState();
    applyRecord(state, gpsStatus(67.9, 21.1, 5000.0));
    const seed = state.seeds.get(1)!;
    expect(seed.lat).toBe(67.9);
    expect(seed.lon).toBe(21.1);
    expect(seed.alt).toBe(5000.0);
    expect(seed.phase).toBe(4);
    expect(seed.gpsValid).toBe(true);
  });

  it("keeps the previous fix when a later status has no fix", () => {
    const state = initialState();
    applyRecord(state, gpsStatus(67.9, 21.1, 5000.0, 4, 1, 1));
    const noFix = gpsStatus(0, 0, 0, 4, 1, 2);
    noFix.fields["flags"] = { value: 0, unit: "raw" };
    applyRecord(state, noFix);
    const seed = state.seeds.get(1)!;
    expect(seed.gpsValid).toBe(false);
    expect(seed.lat).toBe(67.9); // displayed last-known position, flagged stale
  });

  it("accumulates the power series and exposes the latest sample", () => {
    const state = initialState();
    applyRecord(state, powerStatus(0.36, 0.35));
    applyRecord(state, powerStatus(0.0, 0.0, 3));
    const latest = latestPower(state, 1)!;
    expect(latest.iBat1).toBe(0);
    expect(latest.iBat2).toBe(0);
    expect(latest.latches).toBe(3);
    expect(state.power.get(1)!.length).toBe(2);
  });

  it("counts quarantine records without touching telemetry", () => {
    const state = initialState();
    applyRecord(state, record("", {}, "rxsm", "BadCrc"));
    expect(state.quarantineCount).toBe(1);
    expect(state.seeds.size).toBe(0);
  });

  it("tracks per-channel statistics", () => {
    const state = initialState();
    applyRecord(state, gpsStatus(67.9, 21.1, 5000));
    applyRecord(state, { ...gpsStatus(67.9, 21.1, 4000), channel: "iridium" });
    expect(state.channels.get("rxsm")!.count).toBe(1);
    expect(state.channels.get("iridium")!.count).toBe(1);
  });

  it("marks a pending command acked on its command_ack record", () => {
    const state = initialState();
    trackCommand(state, {
      command_id: 7, command: "ping", target: "COP.Seed1",
      issued_by: "ui", ack_state: "pending",
    });
    applyRecord(state, record("command_ack", {
      command_id: [7, "raw"], command: [4, "raw"], result: [0, "raw"],
    }));
    expect(state.commands[0].ack_state).toBe("acked");
  });

  it("reload reconstruction: replaying the same records gives the same view", () => {
    const records = [
      gpsStatus(67.9, 21.1, 5000, 4, 1, 1),
      powerStatus(0.36, 0.35),
      gpsStatus(67.91, 21.12, 4200, 4, 2, 2),
      record("", {}, "iridium", "Truncated"),
    ];
    const a = applyRecords(initialState(), records);
    const b = applyRecords(initialState(), records.map((r) => ({ ...r })));
    expect(JSON.stringify([...a.seeds.entries()]))
      .toBe(JSON.stringify([...b.seeds.entries()]));
    expect(JSON.stringify([...a.power.entries()]))
      .toBe(JSON.stringify([...b.power.entries()]));
    expect(a.quarantineCount).toBe(b.quarantineCount);
    expect(a.lastSequence).toBe(b.lastSequence);
  });
});

describe("map view", () => {
  it("is empty without fixes", () => {
    const view = buildMapView(initialState(), 400, 300);
    expect(view.markers).toEqual([]);
  });

  it("places seed markers and the prediction circle", () => {
    const state = initialState();
    applyRecord(state, gpsStatus(67.9, 21.1, 5000, 4, 1));
    applyRecord(state, gpsStatus(67.905, 21.11, 4800, 4, 2));
    state.predictions.set(1, {
      predicted_lat: 67.902, predicted_lon: 21.105,
      time_to_land_s: 120, uncertainty_radius_m: 150, based_on: 20,
    });
    const view = buildMapView(state, 400, 300);
    expect(view.markers.length).toBe(2);
    expect(view.circles.length).toBe(1);
    expect(view.circles[0].r).toBeGreaterThan(0);
    // all geometry inside the viewport
    for (const m of view.markers) {
      expect(m.x).toBeGreaterThanOrEqual(0);
      expect(m.x).toBeLessThanOrEqual(400);
      expect(m.y).toBeGreaterThanOrEqual(0);
      expect(m.y).toBeLessThanOrEqual(300);
    }
  });

  it("moves the marker when a newer fix arrives", () => {
    const state = initialState();
    applyRecord(state, gpsStatus(67.9, 21.1, 5000, 4, 1, 1));
    const before = buildMapView(state, 400, 300).markers[0];
    applyRecord(state, gpsStatus(67.92, 21.1, 4000, 4, 1, 2));
    applyRecord(state, gpsStatus(67.9, 21.1, 4100, 4, 2, 2));
    const after = buildMapView(state, 400, 300)
      .markers.find((m) => m.seedId === 1)!;
    expect(after.y).not.toBe(before.y);
  });
});

describe("sse parser", () => {
  it("parses events split across chunks and skips keepalives", () => {
    const parser = new SseParser();
    expect(parser.push(": connected\n\n")).toEqual([]);
    expect(parser.push('data: {"a"')).toEqual([]);
    expect(parser.push(': 1}\n\ndata: {"b": 2}\n\n: keepalive\n\n')).toEqual(
      ['{"a": 1}', '{"b": 2}']);
  });
});
