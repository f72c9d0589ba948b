/**
 * Polling loop with a single in-flight request and a user-action queue.
 *
 * One poll (latest + status) runs at a time; user actions (schedule posts,
 * toggles) queue behind the running poll and execute sequentially, so the
 * state shown always reflects the last server-confirmed response — no
 * optimistic updates.
 */
import type { ApiClient, Schedule } from "./api.js";
import { DashboardState, validateSchedule } from "./state.js";

export const DEFAULT_POLL_INTERVAL_MS = 2000;

type Action = () => Promise<void>;

export class Poller {
  readonly state: DashboardState;
  private queue: Action[] = [];
  private busy = false;
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private readonly api: ApiClient,
    private readonly onUpdate: (state: DashboardState) => void = () => {},
    seriesCapacity?: number,
  ) {
    this.state = new DashboardState(seriesCapacity);
  }

  start(intervalMs = DEFAULT_POLL_INTERVAL_MS): void {
    this.stop();
    void this.tick();
    this.timer = setInterval(() => void this.tick(), intervalMs);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  /** One cycle: poll, then drain queued user actions. Re-entrant calls
   * while a cycle is running are dropped (single in-flight poll). */
  async tick(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      try {
        const [latest, status] = await Promise.all([
          this.api.latest(),
          this.api.status(),
        ]);
        this.state.applyPoll(latest, status);
      } catch {
        this.state.applyPollFailure();
      }
      while (this.queue.length > 0) {
        const action = this.queue.shift()!;
        await action();
      }
    } finally {
      this.busy = false;
    }
    this.onUpdate(this.state);
  }

  private enqueue(action: Action): Promise<void> {
    return new Promise((resolve) => {
      this.queue.push(async () => {
        try {
          this.state.lastError = null;
          await action();
        } catch (err) {
          this.state.lastError = err instanceof Error ? err.message : String(err);
        }
        resolve();
      });
      // If no cycle is running, drain immediately via a tickless flush.
      if (!this.busy) void this.flush();
    });
  }

  private async flush(): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      while (this.queue.length > 0) {
        const action = this.queue.shift()!;
        await action();
      }
    } finally {
      this.busy = false;
    }
    this.onUpdate(this.state);
  }

  /** Validates client-side, posts, and leaves the confirmed schedule to the
   * next /status poll; the draft is preserved by the caller on rejection. */
  submitSchedule(entries: Schedule): Promise<void> {
    const problem = validateSchedule(entries);
    if (problem !== null) {
      this.state.lastError = problem;
      this.onUpdate(this.state);
      return Promise.resolve();
    }
    return this.enqueue(async () => {
      await this.api.submitSchedule(entries);
    });
  }

  setSetpoint(chsp: number): Promise<void> {
    return this.enqueue(async () => {
      await this.api.setSetpoint(chsp);
    });
  }

  requestEnrichmentWindow(durationMin = 30): Promise<void> {
    return this.enqueue(async () => {
      await this.api.requestEnrichmentWindow(durationMin);
    });
  }

  /** DDO button state follows the server's confirmation, so rapid toggles
   * settle on whatever the server last acknowledged. */
  toggleDdo(enabled: boolean): Promise<void> {
    return this.enqueue(async () => {
      const confirmed = await this.api.setDdo(enabled);
      if (this.state.status !== null) {
        this.state.status.ddo_enabled = confirmed.enabled;
      }
    });
  }

  refreshSavings(): Promise<void> {
    return this.enqueue(async () => {
      this.state.savings = await this.api.savings();
    });
  }
}
