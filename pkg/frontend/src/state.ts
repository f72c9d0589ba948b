/**
 * Dashboard state: rolling telemetry series, server-confirmed control
 * state, and schedule draft validation.
 *
 * Every rendered value is a verbatim API value — the console never
 * recomputes plant physics client-side.
 */
import type {
  Schedule,
  ScheduleEntry,
  ServiceStatus,
  SavingsReport,
  TelemetryRecord,
} from "./api.js";

/** Fixed-capacity series; oldest points are dropped first. */
export class RingBuffer<T> {
  private items: T[] = [];

  constructor(readonly capacity: number) {
    if (capacity < 1) throw new Error("capacity must be positive");
  }

  push(item: T): void {
    this.items.push(item);
    if (this.items.length > this.capacity) {
      this.items.splice(0, this.items.length - this.capacity);
    }
  }

  toArray(): readonly T[] {
    return this.items;
  }

  get length(): number {
    return this.items.length;
  }

  last(): T | undefined {
    return this.items[this.items.length - 1];
  }
}

export interface SeriesPoint {
  ts: number;
  value: number;
}

export const DEFAULT_SERIES_CAPACITY = 1440;

export class DashboardState {
  latest: TelemetryRecord | null = null;
  status: ServiceStatus | null = null;
  savings: SavingsReport | null = null;
  stale = false;
  missedPolls = 0;
  lastError: string | null = null;

  readonly totalKw: RingBuffer<SeriesPoint>;
  readonly predictedKw: RingBuffer<SeriesPoint>;
  readonly cwshdr: RingBuffer<SeriesPoint>;
  readonly loadRt: RingBuffer<SeriesPoint>;

  constructor(seriesCapacity = DEFAULT_SERIES_CAPACITY) {
    this.totalKw = new RingBuffer(seriesCapacity);
    this.predictedKw = new RingBuffer(seriesCapacity);
    this.cwshdr = new RingBuffer(seriesCapacity);
    this.loadRt = new RingBuffer(seriesCapacity);
  }

  /** Record a successful poll: update confirmed state and the series. */
  applyPoll(latest: TelemetryRecord, status: ServiceStatus): void {
    this.missedPolls = 0;
    this.stale = false;
    this.status = status;
    const isNew = this.latest === null || latest.ts !== this.latest.ts;
    this.latest = latest;
    if (isNew) {
      this.totalKw.push({ ts: latest.ts, value: latest.total_kw });
      this.cwshdr.push({ ts: latest.ts, value: latest.cwshdr });
      this.loadRt.push({ ts: latest.ts, value: latest.load_rt });
      if (status.last_solve && status.last_solve.predicted_kw !== null) {
        this.predictedKw.push({
          ts: status.last_solve.ts,
          value: status.last_solve.predicted_kw,
        });
      }
    }
  }

  /** Record a failed poll; the view goes stale after three misses but the
   * last data is retained. */
  applyPollFailure(): void {
    this.missedPolls += 1;
    if (this.missedPolls >= 3) this.stale = true;
  }
}

/** Client-side schedule draft checks; the server revalidates. */
export function validateScheduleEntry(entry: ScheduleEntry): string | null {
  const groups: Array<[string, number[]]> = [
    ["chiller", entry.on_ch],
    ["cooling tower", entry.on_ct],
    ["condenser pump", entry.on_cwp],
    ["chilled-water pump", entry.on_chwp],
  ];
  for (const [label, flags] of groups) {
    if (flags.length === 0 || !flags.some((f) => f === 1)) {
      return `at least one ${label} must stay available`;
    }
    if (flags.some((f) => f !== 0 && f !== 1)) {
      return `${label} flags must be 0 or 1`;
    }
  }
  if (entry.chsp < 5 || entry.chsp > 10) {
    return "setpoint must be within 5-10 °C";
  }
  return null;
}

export function validateSchedule(entries: Schedule): string | null {
  const days = Object.keys(entries);
  if (days.length === 0) return "schedule is empty";
  for (const day of days) {
    if (!/^\d+$/.test(day)) return `invalid day index: ${day}`;
    const problem = validateScheduleEntry(entries[day]);
    if (problem !== null) return `day ${day}: ${problem}`;
  }
  return null;
}
