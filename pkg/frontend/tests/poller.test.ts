import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { ApiClient } from "../src/api.js";
import { Poller, DEFAULT_POLL_INTERVAL_MS } from "../src/poller.js";
import { makeRecord } from "./stub-server.js";

interface FakeService {
  api: ApiClient;
  calls: Array<{ url: string; body: unknown }>;
  failing: boolean;
  ddoEnabled: boolean;
  setFailing(v: boolean): void;
}

function fakeService(): FakeService {
  let clock = 0;
  const svc: FakeService = {
    calls: [],
    failing: false,
    ddoEnabled: false,
    setFailing(v: boolean) {
      svc.failing = v;
    },
    api: undefined as unknown as ApiClient,
  };
  svc.api = new ApiClient("http://fake", async (url, init) => {
    if (svc.failing) throw new Error("connection refused");
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    svc.calls.push({ url, body });
    const path = url.replace("http://fake", "").split("?")[0];
    const json = (payload: unknown) =>
      new Response(JSON.stringify(payload), { status: 200 });
    if (path === "/telemetry/latest") {
      clock += 1;
      return json(makeRecord(clock));
    }
    if (path === "/status") {
      return json({
        clock_minute: clock,
        ddo_enabled: svc.ddoEnabled,
        ddo_available: true,
        last_solve: null,
        schedule: {},
        chsp: 7,
        enrichment_windows: [],
        latest_ts: clock,
      });
    }
    if (path === "/ddo") {
      svc.ddoEnabled = Boolean(body.enabled);
      return json({ enabled: svc.ddoEnabled });
    }
    return json({ ok: true });
  });
  return svc;
}

describe("Poller", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("shows the latest record within two refresh intervals of startup", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    poller.start();
    await vi.advanceTimersByTimeAsync(2 * DEFAULT_POLL_INTERVAL_MS);
    poller.stop();
    expect(poller.state.latest).not.toBeNull();
    expect(poller.state.stale).toBe(false);
  });

  it("raises the stale banner within three intervals of service loss", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    poller.start();
    await vi.advanceTimersByTimeAsync(DEFAULT_POLL_INTERVAL_MS);
    const lastSeen = poller.state.latest?.ts;
    svc.setFailing(true);
    await vi.advanceTimersByTimeAsync(3 * DEFAULT_POLL_INTERVAL_MS);
    poller.stop();
    expect(poller.state.stale).toBe(true);
    expect(poller.state.latest?.ts).toBe(lastSeen); // retains last data
  });

  it("keeps a single poll in flight", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    const first = poller.tick();
    const second = poller.tick(); // dropped: first still running
    await first;
    await second;
    const polls = svc.calls.filter((c) => c.url.includes("/telemetry/latest"));
    expect(polls).toHaveLength(1);
  });

  it("settles rapid DDO toggles on the last server-confirmed response", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    await poller.tick();
    const a = poller.toggleDdo(true);
    const b = poller.toggleDdo(false);
    await Promise.all([a, b]);
    expect(poller.state.status?.ddo_enabled).toBe(false);
    expect(svc.ddoEnabled).toBe(false);
    const posts = svc.calls.filter((c) => c.url.endsWith("/ddo"));
    expect(posts.map((c) => (c.body as { enabled: boolean }).enabled)).toEqual([
      true,
      false,
    ]);
  });

  it("posts the schedule payload with the drafted on/off pattern", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    await poller.submitSchedule({
      "0": {
        on_ch: [1, 0, 1],
        on_ct: [1, 1, 1],
        on_cwp: [1, 1, 1],
        on_chwp: [1, 1, 1],
        chsp: 7,
      },
    });
    const post = svc.calls.find((c) => c.url.endsWith("/schedule"));
    expect(post).toBeDefined();
    expect(
      (post!.body as { entries: Record<string, { on_ch: number[] }> }).entries[
        "0"
      ].on_ch,
    ).toEqual([1, 0, 1]);
  });

  it("blocks an invalid draft client-side without any request", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    await poller.submitSchedule({
      "0": {
        on_ch: [0, 0, 0],
        on_ct: [1, 1, 1],
        on_cwp: [1, 1, 1],
        on_chwp: [1, 1, 1],
        chsp: 7,
      },
    });
    expect(svc.calls.filter((c) => c.url.endsWith("/schedule"))).toHaveLength(0);
    expect(poller.state.lastError).toMatch(/chiller/);
  });

  it("records server rejections and preserves operation", async () => {
    const svc = fakeService();
    const poller = new Poller(svc.api);
    // make the next POST fail with a 422
    svc.api = undefined as unknown as ApiClient; // unused afterwards
    const rejectingApi = new ApiClient(
      "http://fake",
      async () => new Response(JSON.stringify({ detail: "no" }), { status: 422 }),
    );
    const rejectingPoller = new Poller(rejectingApi);
    await rejectingPoller.setSetpoint(8);
    expect(rejectingPoller.state.lastError).toMatch(/422/);
  });
});
