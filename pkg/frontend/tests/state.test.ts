import { describe, expect, it } from "vitest";
import {
  DashboardState,
  RingBuffer,
  validateSchedule,
  validateScheduleEntry,
} from "../src/state.js";
import { makeRecord } from "./stub-server.js";
import type { ServiceStatus } from "../src/api.js";

function status(overrides: Partial<ServiceStatus> = {}): ServiceStatus {
  return {
    clock_minute: 0,
    ddo_enabled: false,
    ddo_available: true,
    last_solve: null,
    schedule: {},
    chsp: 7,
    enrichment_windows: [],
    latest_ts: 0,
    ...overrides,
  };
}

describe("RingBuffer", () => {
  it("caps the series at its capacity, dropping oldest points", () => {
    const buf = new RingBuffer<number>(1440);
    for (let i = 0; i < 2000; i++) buf.push(i);
    expect(buf.length).toBe(1440);
    expect(buf.toArray()[0]).toBe(560);
    expect(buf.last()).toBe(1999);
  });

  it("rejects a non-positive capacity", () => {
    expect(() => new RingBuffer(0)).toThrow();
  });
});

describe("DashboardState", () => {
  it("appends one series point per new telemetry minute", () => {
    const state = new DashboardState();
    state.applyPoll(makeRecord(1), status());
    state.applyPoll(makeRecord(1), status()); // same minute polled twice
    state.applyPoll(makeRecord(2), status());
    expect(state.totalKw.length).toBe(2);
    expect(state.latest?.ts).toBe(2);
  });

  it("goes stale after three missed polls but keeps the last data", () => {
    const state = new DashboardState();
    state.applyPoll(makeRecord(5), status());
    state.applyPollFailure();
    state.applyPollFailure();
    expect(state.stale).toBe(false);
    state.applyPollFailure();
    expect(state.stale).toBe(true);
    expect(state.latest?.ts).toBe(5); // retained
  });

  it("recovers from staleness on the next successful poll", () => {
    const state = new DashboardState();
    for (let i = 0; i < 4; i++) state.applyPollFailure();
    state.applyPoll(makeRecord(1), status());
    expect(state.stale).toBe(false);
    expect(state.missedPolls).toBe(0);
  });
});

describe("schedule validation", () => {
  const good = {
    on_ch: [1, 0, 1],
    on_ct: [1, 1, 1],
    on_cwp: [0, 1, 0],
    on_chwp: [1, 1, 1],
    chsp: 7,
  };

  it("accepts a draft with at least one of each group on", () => {
    expect(validateScheduleEntry(good)).toBeNull();
    expect(validateSchedule({ "0": good })).toBeNull();
  });

  it("blocks an empty schedule client-side", () => {
    expect(validateSchedule({})).toMatch(/empty/);
  });

  it("blocks a draft that turns a whole group off", () => {
    expect(
      validateScheduleEntry({ ...good, on_ch: [0, 0, 0] }),
    ).toMatch(/chiller/);
  });

  it("blocks an out-of-range setpoint", () => {
    expect(validateScheduleEntry({ ...good, chsp: 12 })).toMatch(/setpoint/);
  });

  it("blocks non-binary flags and bad day keys", () => {
    expect(validateScheduleEntry({ ...good, on_ct: [1, 2, 0] })).not.toBeNull();
    expect(validateSchedule({ tomorrow: good })).toMatch(/day/);
  });
});
