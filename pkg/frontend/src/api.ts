/**
 * Typed HTTP client for the plantd control service.
 *
 * Deliberately narrow: the console performs macro-control only. There is no
 * method that writes pump or fan speeds — micro-control belongs to the
 * optimizer and enrichment windows on the server side.
 */

export interface TelemetryRecord {
  ts: number;
  db: number;
  rh: number;
  cwp_speed: number;
  chwp_speed: number;
  ct_speed: number;
  on_ch: number[];
  on_ct: number[];
  on_cwp: number[];
  on_chwp: number[];
  chfhdr: number;
  cwfhdr: number;
  cwshdr: number;
  chsp: number;
  load_rt: number;
  chkw: number[];
  ctkw: number[];
  cwpkw: number[];
  chwpkw: number[];
  total_kw: number;
}

export interface ScheduleEntry {
  on_ch: number[];
  on_ct: number[];
  on_cwp: number[];
  on_chwp: number[];
  chsp: number;
}

export type Schedule = Record<string, ScheduleEntry>;

export interface SolveLogEntry {
  ts: number;
  applied: { cwp_speed: number; chwp_speed: number; ct_speed: number };
  predicted_kw: number | null;
  measured_kw: number;
  solver_evals: number;
  feasible: boolean;
}

export interface ServiceStatus {
  clock_minute: number;
  ddo_enabled: boolean;
  ddo_available: boolean;
  last_solve: SolveLogEntry | null;
  schedule: Schedule;
  chsp: number;
  enrichment_windows: Array<[number, number]>;
  latest_ts: number | null;
}

export interface DailySaving {
  date: number;
  estimated_kwh: number;
  measured_kwh: number;
  saving_pct: number;
}

export interface SavingsReport {
  days: DailySaving[];
  mean_saving_pct: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path);
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as T;
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) throw new ApiError(res.status, await res.text());
    return (await res.json()) as T;
  }

  latest(): Promise<TelemetryRecord> {
    return this.get("/telemetry/latest");
  }

  range(tsFrom: number, tsTo: number): Promise<TelemetryRecord[]> {
    return this.get(`/telemetry/range?ts_from=${tsFrom}&ts_to=${tsTo}`);
  }

  status(): Promise<ServiceStatus> {
    return this.get("/status");
  }

  submitSchedule(entries: Schedule): Promise<{ ok: boolean }> {
    return this.post("/schedule", { entries });
  }

  setSetpoint(chsp: number): Promise<{ ok: boolean }> {
    return this.post("/setpoint", { chsp });
  }

  requestEnrichmentWindow(
    durationMin = 30,
  ): Promise<{ start: number; duration_min: number }> {
    if (durationMin < 5 || durationMin > 120) {
      return Promise.reject(
        new Error("enrichment window must be 5-120 minutes"),
      );
    }
    return this.post("/enrichment/window", { duration_min: durationMin });
  }

  setDdo(enabled: boolean): Promise<{ enabled: boolean }> {
    return this.post("/ddo", { enabled });
  }

  savings(): Promise<SavingsReport> {
    return this.get("/savings");
  }
}
